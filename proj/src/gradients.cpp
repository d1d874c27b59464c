#include <cmath>

#include "rankope/detail/estimation.hpp"
#include "rankope/detail/gradients.hpp"
#include "rankope/error.hpp"
#include "rankope/optim.hpp"
#include "rankope/plackett_luce.hpp"

namespace rankope {
namespace detail {

Eigen::VectorXd chain_softmax(const Eigen::MatrixXd& phi, const Eigen::VectorXd& p,
                              const Eigen::VectorXd& g) {
  const double mean = p.dot(g);
  return phi.transpose() * (p.array() * (g.array() - mean)).matrix();
}

double log_list_prob_with_grad(const Eigen::VectorXd& probs, std::span<const Response> list,
                               Eigen::VectorXd& grad_probs) {
  require_enumerable_set(list.size());
  thread_local std::vector<Dual> member;
  Dual outside;
  load_members(probs, list, member, outside);
  const Dual prob = list_prob_kernel<Dual>(member, outside);
  grad_probs.setZero(probs.size());
  scatter(prob, list, 1.0 / prob.v, grad_probs);
  return std::log(prob.v);
}

void add_kl_grad_probs(const Eigen::VectorXd& probs, const Eigen::VectorXd& logging_probs,
                       KlScope scope, int list_length, Eigen::VectorXd& grad_probs) {
  if (scope == KlScope::kResponse) {
    grad_probs.array() += probs.array().log() - logging_probs.array().log() + 1.0;
    return;
  }
  require_enumerable_lists(static_cast<int>(probs.size()), list_length);
  Eigen::VectorXd g;
  for_each_list(static_cast<int>(probs.size()), list_length,
                [&](const std::vector<Response>& list) {
                  const double lp = log_list_prob_with_grad(probs, list, g);
                  const double lq = std::log(list_prob(logging_probs, list));
                  // pi(A) * grad log pi(A) * (1 + log pi(A) - log pi0(A))
                  grad_probs += std::exp(lp) * (1.0 + lp - lq) * g;
                });
}

void add_kl_sample_grad_probs(const Eigen::VectorXd& probs, const Eigen::VectorXd& logging_probs,
                              std::span<const Response> sample, Eigen::VectorXd& grad_probs) {
  thread_local Eigen::VectorXd g;
  const double lp = log_list_prob_with_grad(probs, sample, g);
  const double lq = std::log(list_prob(logging_probs, sample));
  grad_probs += (1.0 + lp - lq) * g;
}

}  // namespace detail

using detail::chain_softmax;
using detail::log_list_prob_with_grad;

double kl_response(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw InputError("KL between distributions of different length");
  double kl = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p[a] > 0.0) kl += p[a] * (std::log(p[a]) - std::log(q[a]));
  }
  return std::max(kl, 0.0);
}

double kl_list(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int list_length) {
  require_enumerable_lists(static_cast<int>(p.size()), list_length);
  double kl = 0.0;
  for_each_list(static_cast<int>(p.size()), list_length, [&](const std::vector<Response>& list) {
    const double lp = list_prob(p, list);
    if (lp > 0.0) kl += lp * (std::log(lp) - std::log(list_prob(q, list)));
  });
  return std::max(kl, 0.0);
}

Eigen::VectorXd grad_log_list_prob(const FeatureTable& features, QueryIndex x,
                                   const Eigen::VectorXd& theta, std::span<const Response> list) {
  const Eigen::MatrixXd& phi = features.matrix(x);
  const Eigen::VectorXd probs = softmax(phi * theta);
  Eigen::VectorXd g;
  log_list_prob_with_grad(probs, list, g);
  return chain_softmax(phi, probs, g);
}

Eigen::VectorXd dm_grad_sample_term(const FeatureTable& features, QueryIndex x,
                                    const Eigen::VectorXd& theta, const RewardModel& model,
                                    std::span<const Response> list) {
  return grad_log_list_prob(features, x, theta, list) * model.mean_reward(x, list);
}

Eigen::VectorXd kl_grad(const FeatureTable& features, QueryIndex x, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& logging_probs, KlScope scope, int list_length) {
  const Eigen::MatrixXd& phi = features.matrix(x);
  const Eigen::VectorXd probs = softmax(phi * theta);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(probs.size());
  detail::add_kl_grad_probs(probs, logging_probs, scope, list_length, g);
  return chain_softmax(phi, probs, g);
}

Eigen::VectorXd kl_grad_sample_term(const FeatureTable& features, QueryIndex x,
                                    const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& logging_probs,
                                    std::span<const Response> sample) {
  const Eigen::MatrixXd& phi = features.matrix(x);
  const Eigen::VectorXd probs = softmax(phi * theta);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(probs.size());
  detail::add_kl_sample_grad_probs(probs, logging_probs, sample, g);
  return chain_softmax(phi, probs, g);
}

Eigen::VectorXd kl_grad_single_sample(const FeatureTable& features, QueryIndex x,
                                      const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& logging_probs, KlScope scope,
                                      int list_length, Rng& rng) {
  const Eigen::MatrixXd& phi = features.matrix(x);
  const Eigen::VectorXd probs = softmax(phi * theta);
  const int length = scope == KlScope::kResponse ? 1 : list_length;
  const RankedList sample = sample_list(probs, length, rng);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(probs.size());
  detail::add_kl_sample_grad_probs(probs, logging_probs, sample.entries(), g);
  return chain_softmax(phi, probs, g);
}

Eigen::VectorXd value_grad(EstimatorKind kind, const EvaluationContext& ctx,
                           const Eigen::VectorXd& theta, GradientMode mode, Rng* rng) {
  detail::check_estimator_inputs(kind, ctx);
  const LoggedDataset& data = *ctx.data;
  const FeatureTable& features = *data.spec.features;
  const int K = data.spec.list_length;
  require_enumerable_set(static_cast<std::size_t>(K));
  const bool with_model = needs_model(kind);
  if (with_model && mode == GradientMode::kExact) {
    require_enumerable_lists(data.spec.num_responses, K);
  }
  if (with_model && mode == GradientMode::kSingleSample && rng == nullptr) {
    throw InputError("single-sample gradients need a random generator");
  }
  const detail::Propensities props(data, ctx.logging, kind);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad_probs(data.spec.num_responses);
  std::vector<detail::Dual> member;
  detail::Dual outside;
  std::vector<double> first_rewards;
  Eigen::VectorXd sample_grad;
  for (std::size_t t = 0; t < data.size(); ++t) {
    const auto& it = data.interactions[t];
    const Eigen::MatrixXd& phi = features.matrix(it.query);
    const Eigen::VectorXd probs = softmax(phi * theta);
    const detail::RoundFacts f = detail::round_facts(kind, ctx, props, t, first_rewards);
    detail::load_members(probs, it.list.entries(), member, outside);
    const auto rt = detail::round_term<detail::Dual>(kind, f, member, outside);
    grad_probs.setZero();
    detail::scatter(rt.term, it.list.entries(), 1.0, grad_probs);
    if (with_model) {
      if (mode == GradientMode::kExact) {
        detail::for_each_set_contribution<detail::Dual>(
            probs, ctx.model->scores(it.query), K,
            [&](const detail::Dual& v, std::span<const Response> set) {
              detail::scatter(v, set, 1.0, grad_probs);
            });
      } else {
        const RankedList sample = sample_list(probs, K, *rng);
        log_list_prob_with_grad(probs, sample.entries(), sample_grad);
        grad_probs += ctx.model->mean_reward(it.query, sample.entries()) * sample_grad;
      }
    }
    grad += chain_softmax(phi, probs, grad_probs);
  }
  return grad / static_cast<double>(data.size());
}

}  // namespace rankope
