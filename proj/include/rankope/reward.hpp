#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankope/types.hpp"

namespace rankope {

// Which features the reward model sees. `noisy` adds N(0, sigma^2) to every
// (query, response, dim) entry once, from a generator seeded by `seed`.
struct FeatureView {
  double sigma = 0.0;
  std::uint64_t seed = 0;

  static FeatureView clean() { return {}; }
  static FeatureView noisy(double sigma, std::uint64_t seed) { return {sigma, seed}; }
  bool is_clean() const { return sigma == 0.0; }
  std::string describe() const;
};

FeatureTablePtr make_feature_view(const FeatureTablePtr& clean, const FeatureView& view);

struct FitInfo {
  int iterations = 0;
  double grad_norm = 0.0;
  double objective = 0.0;
  double ridge = 0.0;
  std::string solver;
};

/// Plackett-Luce reward model r(x, A; w) over a (possibly noisy) feature view.
class RewardModel {
 public:
  RewardModel(Eigen::VectorXd w, const FeatureTablePtr& clean_features,
              FeatureView view = FeatureView::clean());

  const Eigen::VectorXd& w() const { return w_; }
  const FeatureView& view() const { return view_; }
  const FeatureTable& features() const { return *features_; }
  const FeatureTablePtr& features_ptr() const { return features_; }

  // phi~(x, a)^T w for every response.
  const Eigen::VectorXd& scores(QueryIndex x) const;

  /// Probability that the first entry of `list` is the human's top choice.
  double mean_reward(QueryIndex x, std::span<const Response> list) const;
  double mean_reward(QueryIndex x, const RankedList& list) const;
  // Same quantity for a set with a designated first element.
  double first_reward(QueryIndex x, Response first, std::span<const Response> members) const;

  const std::optional<FitInfo>& fit_info() const { return fit_info_; }
  void set_fit_info(FitInfo info) { fit_info_ = std::move(info); }

 private:
  Eigen::VectorXd w_;
  FeatureView view_;
  FeatureTablePtr features_;
  std::vector<Eigen::VectorXd> scores_;
  std::optional<FitInfo> fit_info_;
};

enum class MleSolver { kNewton, kAdam };

struct MleConfig {
  int max_iters = 10000;
  double step_size = 0.05;  // Adam only
  double ridge = 1e-4;
  double grad_tolerance = 1e-8;
  std::optional<Eigen::VectorXd> init;  // defaults to zero
  MleSolver solver = MleSolver::kNewton;
};

/// sum_t sum_i log softmax stage-i probability of the human ranking,
/// minus (ridge / 2) |w|^2.
double pl_log_likelihood(const RewardModel& model, const LoggedDataset& data, double ridge = 0.0);

// Objective and gradient at an arbitrary w over a fixed feature view.
struct LikelihoodEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // filled only on request
};
LikelihoodEval pl_log_likelihood_eval(const FeatureTable& features, const LoggedDataset& data,
                                      const Eigen::VectorXd& w, double ridge,
                                      bool with_hessian = false);

/// Ridge-regularized maximum-likelihood fit of w from logged human rankings.
/// Throws ConvergenceError if the gradient tolerance is not met in max_iters.
RewardModel fit_mle(const LoggedDataset& data, const MleConfig& config,
                    const FeatureView& view = FeatureView::clean());

}  // namespace rankope
