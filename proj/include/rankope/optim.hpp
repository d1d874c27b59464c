#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rankope/adam.hpp"
#include "rankope/estimators.hpp"
#include "rankope/rng.hpp"
#include "rankope/types.hpp"

namespace rankope {

enum class Method { kDM, kIPS, kDR, kSetValue, kSetIPS, kSetDR, kRLHF, kDPO };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);  // dm, ips, dr, set, set-ips, set-dr, rlhf, dpo
bool is_estimator_method(Method method);
EstimatorKind estimator_of(Method method);
bool method_needs_model(Method method);

enum class GradientMode { kExact, kSingleSample };
// Support of the KL regularizer: single responses or whole ranked lists.
enum class KlScope { kResponse, kList };
// kStandard: sigma(v) = 1 / (1 + e^-v). kLiteral: 1 / (1 + e^v).
enum class DpoSigmoid { kStandard, kLiteral };

struct OptimConfig {
  double gamma = 1e-3;
  int steps = 5000;
  AdamConfig adam;
  GradientMode gradient_mode = GradientMode::kSingleSample;
  GradientMode rlhf_gradient_mode = GradientMode::kExact;
  KlScope kl_scope = KlScope::kResponse;
  DpoSigmoid dpo_sigmoid = DpoSigmoid::kStandard;
  std::uint64_t seed = 0;
  int record_every = 10;  // 0 records only the first and last step
  std::size_t probe_size = 500;
  int smoothing_window = 50;
  ValueOracleConfig oracle;
  EstimatorOptions estimator_options;
};

// Fixed inputs of an optimization: logged data, the logging policy's response
// distributions (KL anchor, DPO reference, propensity fallback), and the
// fitted reward model when the method needs one.
struct OptimizationProblem {
  const LoggedDataset* data = nullptr;
  const PolicyTable* logging = nullptr;
  const RewardModel* model = nullptr;
};

// ---- KL regularizer -------------------------------------------------------

/// KL(p || q) over responses.
double kl_response(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
/// KL between the Plackett-Luce list distributions of p and q (enumerated).
double kl_list(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int list_length);

// Exact gradient in theta of KL(pi(.|x; theta) || pi0(.|x)).
Eigen::VectorXd kl_grad(const FeatureTable& features, QueryIndex x, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& logging_probs, KlScope scope, int list_length);

// grad log pi(sample) * (1 + log pi(sample) - log pi0(sample)) for a given
// sample (a single response, or a ranked list for list scope).
Eigen::VectorXd kl_grad_sample_term(const FeatureTable& features, QueryIndex x,
                                    const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& logging_probs,
                                    std::span<const Response> sample);
// Draws the sample from pi(.|x; theta) and returns the term above.
Eigen::VectorXd kl_grad_single_sample(const FeatureTable& features, QueryIndex x,
                                      const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& logging_probs, KlScope scope,
                                      int list_length, Rng& rng);

// ---- Policy-value gradients ----------------------------------------------

// grad_theta log pi(list | x; theta).
Eigen::VectorXd grad_log_list_prob(const FeatureTable& features, QueryIndex x,
                                   const Eigen::VectorXd& theta, std::span<const Response> list);

// grad log pi(list) * r(x, list; model): one sample of the direct-method gradient.
Eigen::VectorXd dm_grad_sample_term(const FeatureTable& features, QueryIndex x,
                                    const Eigen::VectorXd& theta, const RewardModel& model,
                                    std::span<const Response> list);

/// Gradient in theta of an estimator's value for the softmax policy theta.
/// Exact mode differentiates the full estimator. Single-sample mode replaces
/// the direct-method expectation by one sampled list per round; every other
/// part is already exact.
Eigen::VectorXd value_grad(EstimatorKind kind, const EvaluationContext& ctx,
                           const Eigen::VectorXd& theta, GradientMode mode, Rng* rng = nullptr);

// ---- Objectives -----------------------------------------------------------

// (1/n) sum_t KL over the dataset's rounds.
double mean_kl(const OptimizationProblem& problem, const Eigen::VectorXd& theta, KlScope scope);

// (1/n) sum_t E_{a ~ pi}[phi~(x_t, a)^T w].
double rlhf_reward(const OptimizationProblem& problem, const Eigen::VectorXd& theta);
// sum_t log sigma(gamma * (log-ratio of top human choice - log-ratio of second)).
double dpo_objective(const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                     double gamma, DpoSigmoid sigmoid = DpoSigmoid::kStandard);
Eigen::VectorXd dpo_grad(const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                         double gamma, DpoSigmoid sigmoid = DpoSigmoid::kStandard);

/// The maximized objective: estimated value minus gamma times mean KL for the
/// estimator methods and RLHF; the DPO log-likelihood for DPO.
double objective(Method method, const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                 const OptimConfig& config);
Eigen::VectorXd objective_grad(Method method, const OptimizationProblem& problem,
                               const Eigen::VectorXd& theta, const OptimConfig& config,
                               GradientMode mode, Rng* rng = nullptr);

// ---- Optimization loop ----------------------------------------------------

struct TrainRecord {
  int step = 0;
  double raw_value = 0.0;       // set-value estimate on a fresh on-policy probe
  double smoothed_value = 0.0;  // mean raw value over the trailing window
  double true_value = 0.0;      // NaN when not computable
  double kl = 0.0;
  double objective = 0.0;
};

struct TrainTrace {
  Method method = Method::kDM;
  int smoothing_window = 50;
  std::vector<TrainRecord> records;

  std::string to_csv(bool with_header = true) const;
};

struct OptimizeResult {
  Eigen::VectorXd theta;
  TrainTrace trace;
};

OptimizeResult optimize(Method method, const OptimizationProblem& problem,
                        const Eigen::VectorXd& init_theta, const OptimConfig& config);

}  // namespace rankope
