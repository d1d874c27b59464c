#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rankope/optim.hpp"
#include "rankope/rng.hpp"
#include "rankope/types.hpp"

namespace rankope {

struct SynthConfig {
  int num_responses = 7;
  int list_length = 2;
  std::size_t num_rounds = 3000;
  int latent_dim = 4;            // u_x, v_a in [-1, 1]^latent_dim
  double reward_scale = 10.0;    // w_* ~ N(0, reward_scale^2 I)
  double logging_scale = 5.0;    // theta_0 = w_* + N(0, logging_scale^2 I)
  double eval_scale = 5.0;       // theta_i = theta_0 + N(0, eval_scale^2 I)
  int num_eval_policies = 5;
  double feature_noise = 0.0;    // reward-model misspecification sigma_phi
  int runs = 50;
  std::uint64_t seed = 0;
  bool uniform_logging = false;  // theta_0 = 0

  int feature_dim() const { return latent_dim * latent_dim; }
  void validate() const;
};

struct SynthProblem {
  ProblemSpec spec;
  Eigen::VectorXd logging_theta;
  std::vector<Eigen::VectorXd> eval_thetas;
  std::uint64_t feature_seed = 0;  // synthetic_features(..., Rng(feature_seed)) rebuilds the table
};

// phi(x, a) = vec(u_x v_a^T), column-major, for `num_queries` fresh queries.
FeatureTablePtr synthetic_features(int num_responses, std::size_t num_queries, int latent_dim,
                                   Rng rng);

/// Draws features, w_*, the logging policy and the evaluated policies. Query t
/// of the n rounds is query t of the feature table.
SynthProblem generate_problem(const SynthConfig& config, Rng& rng);

/// Logs one round per query id: list from the logging policy, ranking from the
/// true reward model, and exact list and set propensities.
LoggedDataset simulate_logs(const ProblemSpec& spec, const PolicyTable& logging, Rng& rng);
LoggedDataset simulate_logs(const ProblemSpec& spec, const Eigen::VectorXd& logging_theta,
                            Rng& rng);

double absolute_error(std::span<const double> truths, std::span<const double> estimates);
// Fraction of policy pairs whose estimated order differs from the true order.
double relative_error(std::span<const double> truths, std::span<const double> estimates);

// ---- Experiments ----------------------------------------------------------

enum class ExperimentKind { kAbsolute, kRelative, kOptimization };
std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);  // abs, rel, optim

// What the grid varies. kNone evaluates the configuration as is.
enum class SweepParam { kNone, kListLength, kNumRounds, kFeatureNoise, kProblem };
std::string_view to_string(SweepParam param);
SweepParam parse_sweep_param(std::string_view name);  // none, K, n, sigma_phi, problem
std::vector<double> default_grid(SweepParam param, int num_responses);

struct ExperimentOptions {
  ExperimentKind kind = ExperimentKind::kAbsolute;
  SweepParam vary = SweepParam::kNone;
  std::vector<double> grid;  // empty means default_grid(vary)
  SynthConfig config;
  int parallel = 1;          // replicate worker threads
  // Optimization experiments only.
  OptimConfig optim;
  std::vector<Method> methods;  // empty means every method except set
};

// One (grid point, estimator) cell with its per-replicate metrics.
struct ExperimentCell {
  double sweep_value = 0.0;
  std::string estimator;
  std::vector<double> per_run;  // indexed by replicate
};

struct ExperimentResult {
  SweepParam vary = SweepParam::kNone;
  std::vector<ExperimentCell> cells;

  const ExperimentCell& cell(double sweep_value, const std::string& estimator) const;
  std::string to_csv() const;
};

/// Runs every replicate at every grid point. Replicate r draws its problem
/// from a seed derived from the master seed and r only, so grid points are
/// paired and results do not depend on `parallel`.
ExperimentResult run_experiment(const ExperimentOptions& options);

}  // namespace rankope
