#pragma once

// Per-round estimator terms, templated on the scalar so that the same code
// yields values (double) and exact gradients (Dual) with respect to the
// evaluated policy's response probabilities.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rankope/detail/kernels.hpp"
#include "rankope/estimators.hpp"
#include "rankope/plackett_luce.hpp"

namespace rankope::detail {

// Policy-independent facts about one logged round.
struct RoundFacts {
  std::span<const Response> members;  // logged list, in logged order
  std::size_t human_top = 0;          // position of the human's top choice in members
  bool aligned = false;               // logged first == human first
  bool full_set = false;              // K == L
  double list_propensity = std::numeric_limits<double>::quiet_NaN();
  double set_propensity = std::numeric_limits<double>::quiet_NaN();
  std::span<const double> first_rewards;  // model r(x, m_i first, S), empty without model
  std::optional<double> max_ratio;
};

template <class T>
struct RoundTerm {
  T term{};
  double ratio = std::numeric_limits<double>::quiet_NaN();
};

template <class T>
T clip_ratio(T ratio, const std::optional<double>& max_ratio) {
  if (max_ratio && value_of(ratio) > *max_ratio) return T(*max_ratio);
  return ratio;
}

// Term of round t excluding any direct-method contribution, which callers add
// per query.
template <class T>
RoundTerm<T> round_term(EstimatorKind kind, const RoundFacts& f, std::span<const T> member,
                        const T& outside) {
  RoundTerm<T> out;
  const double y = f.aligned ? 1.0 : 0.0;
  switch (kind) {
    case EstimatorKind::kOnPolicyCount:
      out.term = T(y);
      break;
    case EstimatorKind::kDM:
      out.term = T(0.0);
      break;
    case EstimatorKind::kIPS:
    case EstimatorKind::kDR: {
      T ratio = list_prob_kernel<T>(member, outside) / T(f.list_propensity);
      ratio = clip_ratio(ratio, f.max_ratio);
      out.ratio = value_of(ratio);
      const double centered = kind == EstimatorKind::kIPS ? y : y - f.first_rewards[0];
      out.term = ratio * T(centered);
      break;
    }
    case EstimatorKind::kSetValue: {
      const auto fc = first_choice_kernel<T>(member, outside);
      out.term = fc.joint[f.human_top] / fc.set_prob;
      break;
    }
    case EstimatorKind::kSetIPS: {
      const auto fc = first_choice_kernel<T>(member, outside);
      const T nu = f.full_set ? T(1.0) : fc.set_prob;
      T ratio = clip_ratio(nu / T(f.set_propensity), f.max_ratio);
      out.ratio = value_of(ratio);
      out.term = ratio * (fc.joint[f.human_top] / fc.set_prob);
      break;
    }
    case EstimatorKind::kSetDR: {
      const auto fc = first_choice_kernel<T>(member, outside);
      const T nu = f.full_set ? T(1.0) : fc.set_prob;
      T ratio = clip_ratio(nu / T(f.set_propensity), f.max_ratio);
      out.ratio = value_of(ratio);
      T model_part(0.0);
      for (std::size_t i = 0; i < member.size(); ++i) model_part += fc.joint[i] * T(f.first_rewards[i]);
      model_part /= fc.set_prob;
      out.term = ratio * (fc.joint[f.human_top] / fc.set_prob - model_part);
      break;
    }
  }
  return out;
}

// Members' probabilities and outside mass as plain doubles.
inline void load_members(const Eigen::VectorXd& probs, std::span<const Response> members,
                         std::vector<double>& member, double& outside) {
  member.resize(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) member[i] = probs[members[i] - 1];
  outside = outside_mass(probs, members);
}

// Same, seeded so that member i occupies tangent slot i and the outside mass
// occupies slot members.size().
inline void load_members(const Eigen::VectorXd& probs, std::span<const Response> members,
                         std::vector<Dual>& member, Dual& outside) {
  member.resize(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    member[i] = Dual::seed(probs[members[i] - 1], static_cast<int>(i));
  }
  outside = Dual::seed(outside_mass(probs, members), static_cast<int>(members.size()));
}

// Adds the tangent of `x` to a full-length gradient with respect to the
// response probabilities: member slots to their responses, the outside slot to
// every other response.
inline void scatter(const Dual& x, std::span<const Response> members, double weight,
                    Eigen::VectorXd& grad_probs) {
  const double outside = x.d[members.size()] * weight;
  grad_probs.array() += outside;
  for (std::size_t i = 0; i < members.size(); ++i) {
    grad_probs[members[i] - 1] += (x.d[i] * weight) - outside;
  }
}

// E_{A ~ pi}[r(x, A; model)] by summing over the C(L, K) sets and the first
// element within each set. `sink(set_value, members)` receives each set's
// contribution.
template <class T, class Sink>
void for_each_set_contribution(const Eigen::VectorXd& probs, const Eigen::VectorXd& reward_scores,
                               int list_length, Sink&& sink) {
  const int num_responses = static_cast<int>(probs.size());
  std::vector<T> member;
  T outside;
  std::vector<double> first_rewards(static_cast<std::size_t>(list_length));
  for_each_set(num_responses, list_length, [&](const std::vector<Response>& set) {
    load_members(probs, set, member, outside);
    double m = -std::numeric_limits<double>::infinity();
    for (Response a : set) m = std::max(m, reward_scores[a - 1]);
    double total = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      first_rewards[i] = std::exp(reward_scores[set[i] - 1] - m);
      total += first_rewards[i];
    }
    const auto fc = first_choice_kernel<T>(member, outside);
    T value(0.0);
    for (std::size_t i = 0; i < set.size(); ++i) value += fc.joint[i] * T(first_rewards[i] / total);
    sink(value, std::span<const Response>(set));
  });
}

}  // namespace rankope::detail
