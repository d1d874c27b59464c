#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rankope/detail/round_terms.hpp"
#include "rankope/error.hpp"
#include "rankope/estimators.hpp"
#include "rankope/plackett_luce.hpp"

namespace rankope::detail {

// Reads or computes the logging propensities an estimator needs: logged
// values win, otherwise they are computed from the logging policy.
class Propensities {
 public:
  Propensities(const LoggedDataset& data, const PolicyTable* logging, EstimatorKind kind)
      : data_(data), logging_(logging) {
    const bool need_list = needs_list_propensities(kind);
    const bool need_set = needs_set_propensities(kind);
    if (need_list) source_ = resolve(data.has_list_propensities(), "list_propensity", kind);
    if (need_set) {
      const auto s = resolve(data.has_set_propensities(), "set_propensity", kind);
      source_ = (source_ != PropensitySource::kNone && s != source_) ? PropensitySource::kComputed : s;
    }
    list_logged_ = need_list && data.has_list_propensities();
    set_logged_ = need_set && data.has_set_propensities();
  }

  PropensitySource source() const { return source_; }

  double list(std::size_t t) const {
    const auto& it = data_.interactions[t];
    const double p = list_logged_ ? *it.list_propensity : list_prob(logging_->probs(it.query), it.list);
    return checked(p, t, "list_propensity");
  }

  double set(std::size_t t) const {
    const auto& it = data_.interactions[t];
    const double p =
        set_logged_ ? *it.set_propensity : set_prob(logging_->probs(it.query), ResponseSet(it.list));
    return checked(p, t, "set_propensity");
  }

 private:
  PropensitySource resolve(bool logged, const char* field, EstimatorKind kind) {
    if (logged) return PropensitySource::kLogged;
    if (logging_ == nullptr) {
      throw DataError(std::string(to_string(kind)) + " needs " + field +
                      " in every interaction or a logging policy to compute it");
    }
    return PropensitySource::kComputed;
  }

  static double checked(double p, std::size_t t, const char* field) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw DataError(std::string(field) + " of interaction " + std::to_string(t) +
                      " is zero or invalid");
    }
    return p;
  }

  const LoggedDataset& data_;
  const PolicyTable* logging_;
  PropensitySource source_ = PropensitySource::kNone;
  bool list_logged_ = false;
  bool set_logged_ = false;
};

inline bool is_set_family(EstimatorKind kind) {
  return kind == EstimatorKind::kSetValue || kind == EstimatorKind::kSetIPS ||
         kind == EstimatorKind::kSetDR;
}

// Checks shared by value and gradient computation.
inline void check_estimator_inputs(EstimatorKind kind, const EvaluationContext& ctx) {
  if (ctx.data == nullptr) throw InputError("no dataset to evaluate");
  if (ctx.data->interactions.empty()) throw InputError("dataset is empty");
  const int L = ctx.data->spec.num_responses;
  const int K = ctx.data->spec.list_length;
  if (needs_model(kind) && ctx.model == nullptr) {
    throw InputError(std::string(to_string(kind)) + " needs a fitted reward model");
  }
  if (kind == EstimatorKind::kSetDR || (kind == EstimatorKind::kSetIPS && K != L)) {
    require_enumerable_set(static_cast<std::size_t>(K));
  }
}

// Fills the policy-independent facts of round t. `first_rewards` is scratch
// storage that must outlive the returned facts.
inline RoundFacts round_facts(EstimatorKind kind, const EvaluationContext& ctx,
                              const Propensities& props, std::size_t t,
                              std::vector<double>& first_rewards) {
  const LoggedDataset& data = *ctx.data;
  const auto& it = data.interactions[t];
  const auto& members = it.list.entries();
  RoundFacts f;
  f.members = members;
  f.aligned = it.aligned();
  f.full_set = data.spec.list_length == data.spec.num_responses;
  f.max_ratio = ctx.options.max_ratio;
  if (is_set_family(kind)) {
    const auto pos = std::find(members.begin(), members.end(), it.human.top());
    if (pos == members.end()) {
      throw DataError("interaction " + std::to_string(t) +
                      ": human top choice is not in the logged set");
    }
    f.human_top = static_cast<std::size_t>(pos - members.begin());
  }
  if (needs_list_propensities(kind)) f.list_propensity = props.list(t);
  if (needs_set_propensities(kind)) f.set_propensity = props.set(t);
  if (kind == EstimatorKind::kDR || kind == EstimatorKind::kSetDR) {
    first_rewards.resize(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      first_rewards[i] = ctx.model->first_reward(it.query, members[i], members);
    }
    f.first_rewards = first_rewards;
  }
  return f;
}

}  // namespace rankope::detail
