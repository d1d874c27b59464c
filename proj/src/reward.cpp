#include "rankope/reward.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rankope/adam.hpp"
#include "rankope/error.hpp"
#include "rankope/rng.hpp"
#include "rankope/summation.hpp"

namespace rankope {

std::string FeatureView::describe() const {
  if (is_clean()) return "clean";
  std::ostringstream os;
  os.precision(17);
  os << "noisy(" << sigma << "," << seed << ")";
  return os.str();
}

FeatureTablePtr make_feature_view(const FeatureTablePtr& clean, const FeatureView& view) {
  if (!clean) throw InputError("reward model needs a feature table");
  if (view.is_clean()) return clean;
  if (!(view.sigma > 0.0)) throw InputError("feature noise sigma must be nonnegative");
  Rng rng(view.seed);
  std::vector<Eigen::MatrixXd> noisy;
  noisy.reserve(clean->num_queries());
  for (QueryIndex q = 0; q < clean->num_queries(); ++q) {
    Eigen::MatrixXd m = clean->matrix(q);
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(a, j) += rng.normal(0.0, view.sigma);
    }
    noisy.push_back(std::move(m));
  }
  return std::make_shared<const FeatureTable>(clean->num_responses(), clean->dim(),
                                              std::move(noisy));
}

RewardModel::RewardModel(Eigen::VectorXd w, const FeatureTablePtr& clean_features,
                         FeatureView view)
    : w_(std::move(w)), view_(view), features_(make_feature_view(clean_features, view)) {
  if (w_.size() != features_->dim()) {
    throw InputError("reward parameter has length " + std::to_string(w_.size()) +
                     ", expected d=" + std::to_string(features_->dim()));
  }
  scores_.reserve(features_->num_queries());
  for (QueryIndex q = 0; q < features_->num_queries(); ++q) {
    scores_.push_back(features_->matrix(q) * w_);
  }
}

const Eigen::VectorXd& RewardModel::scores(QueryIndex x) const {
  if (x >= scores_.size()) throw InputError("unknown query " + std::to_string(x));
  return scores_[x];
}

double RewardModel::first_reward(QueryIndex x, Response first,
                                 std::span<const Response> members) const {
  const Eigen::VectorXd& s = scores(x);
  double m = -std::numeric_limits<double>::infinity();
  for (Response a : members) m = std::max(m, s[a - 1]);
  double total = 0.0;
  for (Response a : members) total += std::exp(s[a - 1] - m);
  return std::exp(s[first - 1] - m) / total;
}

double RewardModel::mean_reward(QueryIndex x, std::span<const Response> list) const {
  if (list.empty()) throw InputError("ranked list is empty");
  for (Response a : list) {
    if (a < 1 || a > features_->num_responses()) {
      throw InputError("response " + std::to_string(a) + " out of range");
    }
  }
  return first_reward(x, list.front(), list);
}

double RewardModel::mean_reward(QueryIndex x, const RankedList& list) const {
  return mean_reward(x, std::span<const Response>(list.entries()));
}

LikelihoodEval pl_log_likelihood_eval(const FeatureTable& features, const LoggedDataset& data,
                                      const Eigen::VectorXd& w, double ridge,
                                      bool with_hessian) {
  const int d = features.dim();
  LikelihoodEval out;
  out.gradient = Eigen::VectorXd::Zero(d);
  if (with_hessian) out.hessian = Eigen::MatrixXd::Zero(d, d);
  CompensatedSum value;
  Eigen::VectorXd scores;
  Eigen::VectorXd weights;
  Eigen::VectorXd mean(d);
  for (const auto& it : data.interactions) {
    const Eigen::MatrixXd& phi = features.matrix(it.query);
    const std::size_t k = it.human.size();
    scores.resize(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) scores[i] = phi.row(it.human[i] - 1).dot(w);
    for (std::size_t i = 0; i + 1 < k; ++i) {
      // Stage i chooses human[i] among human[i..K-1].
      const auto tail = scores.tail(static_cast<Eigen::Index>(k - i));
      const double m = tail.maxCoeff();
      weights = (tail.array() - m).exp();
      const double total = weights.sum();
      value.add(scores[i] - m - std::log(total));
      weights /= total;
      mean.setZero();
      for (std::size_t j = i; j < k; ++j) mean += weights[j - i] * phi.row(it.human[j] - 1).transpose();
      out.gradient += phi.row(it.human[i] - 1).transpose() - mean;
      if (with_hessian) {
        for (std::size_t j = i; j < k; ++j) {
          const Eigen::VectorXd c = phi.row(it.human[j] - 1).transpose() - mean;
          out.hessian.noalias() -= weights[j - i] * c * c.transpose();
        }
      }
    }
  }
  value.add(-0.5 * ridge * w.squaredNorm());
  out.value = value.value();
  out.gradient -= ridge * w;
  if (with_hessian) out.hessian.diagonal().array() -= ridge;
  return out;
}

double pl_log_likelihood(const RewardModel& model, const LoggedDataset& data, double ridge) {
  if (data.interactions.empty()) throw InputError("log-likelihood of an empty dataset");
  return pl_log_likelihood_eval(model.features(), data, model.w(), ridge).value;
}

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Damped Newton ascent on the concave ridge objective.
FitInfo newton_ascent(const FeatureTable& features, const LoggedDataset& data,
                      const MleConfig& config, Eigen::VectorXd& w) {
  FitInfo info;
  info.solver = "newton";
  info.ridge = config.ridge;
  auto eval = pl_log_likelihood_eval(features, data, w, config.ridge, true);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    info.iterations = iter;
    info.grad_norm = inf_norm(eval.gradient);
    info.objective = eval.value;
    if (info.grad_norm <= config.grad_tolerance) return info;

    Eigen::VectorXd dir;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-eval.hessian);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      dir = ldlt.solve(eval.gradient);
    }
    if (dir.size() == 0 || !dir.allFinite() || dir.dot(eval.gradient) <= 0.0) {
      dir = eval.gradient;
    }
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd trial = w + step * dir;
      auto next = pl_log_likelihood_eval(features, data, trial, config.ridge, true);
      // Armijo condition; the second clause accepts steps that only lose
      // round-off in the objective but shrink the gradient.
      if (next.value >= eval.value + 1e-4 * step * dir.dot(eval.gradient) ||
          (next.value >= eval.value - 1e-12 * std::abs(eval.value) &&
           inf_norm(next.gradient) < info.grad_norm)) {
        w = trial;
        eval = std::move(next);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  info.grad_norm = inf_norm(eval.gradient);
  info.objective = eval.value;
  if (info.grad_norm <= config.grad_tolerance) return info;
  throw ConvergenceError("reward-model MLE did not reach gradient tolerance; last |grad|_inf = " +
                             std::to_string(info.grad_norm),
                         info.grad_norm);
}

FitInfo adam_ascent(const FeatureTable& features, const LoggedDataset& data,
                    const MleConfig& config, Eigen::VectorXd& w) {
  FitInfo info;
  info.solver = "adam";
  info.ridge = config.ridge;
  // The objective is a sum over rounds; Adam is run on the per-round mean so
  // that the step size means the same thing for every n.
  const double scale = 1.0 / static_cast<double>(data.size());
  Adam adam(w.size(), AdamConfig{config.step_size, 0.9, 0.999, 1e-8});
  for (int iter = 0; iter < config.max_iters; ++iter) {
    auto eval = pl_log_likelihood_eval(features, data, w, config.ridge);
    info.iterations = iter;
    info.grad_norm = inf_norm(eval.gradient);
    info.objective = eval.value;
    if (info.grad_norm <= config.grad_tolerance) return info;
    adam.ascend(w, eval.gradient * scale);
  }
  throw ConvergenceError("reward-model MLE (adam) did not reach gradient tolerance; last "
                         "|grad|_inf = " + std::to_string(info.grad_norm),
                         info.grad_norm);
}

}  // namespace

RewardModel fit_mle(const LoggedDataset& data, const MleConfig& config, const FeatureView& view) {
  if (data.interactions.empty()) throw InputError("cannot fit a reward model to no data");
  if (config.max_iters <= 0 || !(config.step_size > 0.0) || !(config.ridge >= 0.0) ||
      !(config.grad_tolerance > 0.0)) {
    throw InputError("invalid MLE configuration");
  }
  const FeatureTablePtr features = make_feature_view(data.spec.features, view);
  Eigen::VectorXd w = config.init ? *config.init : Eigen::VectorXd::Zero(features->dim());
  if (w.size() != features->dim()) throw InputError("MLE initial point has wrong length");
  FitInfo info = config.solver == MleSolver::kNewton ? newton_ascent(*features, data, config, w)
                                                     : adam_ascent(*features, data, config, w);
  RewardModel model(std::move(w), data.spec.features, view);
  model.set_fit_info(std::move(info));
  return model;
}

}  // namespace rankope
