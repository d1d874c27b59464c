#include "rankope/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rankope/detail/estimation.hpp"
#include "rankope/error.hpp"
#include "rankope/plackett_luce.hpp"
#include "rankope/rng.hpp"
#include "rankope/summation.hpp"

namespace rankope {

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kOnPolicyCount: return "on-policy";
    case EstimatorKind::kDM: return "dm";
    case EstimatorKind::kIPS: return "ips";
    case EstimatorKind::kDR: return "dr";
    case EstimatorKind::kSetValue: return "set";
    case EstimatorKind::kSetIPS: return "set-ips";
    case EstimatorKind::kSetDR: return "set-dr";
  }
  return "?";
}

EstimatorKind parse_estimator(std::string_view name) {
  for (auto kind : {EstimatorKind::kOnPolicyCount, EstimatorKind::kDM, EstimatorKind::kIPS,
                    EstimatorKind::kDR, EstimatorKind::kSetValue, EstimatorKind::kSetIPS,
                    EstimatorKind::kSetDR}) {
    if (to_string(kind) == name) return kind;
  }
  throw InputError("unknown estimator '" + std::string(name) +
                   "' (expected on-policy, dm, ips, dr, set, set-ips, set-dr)");
}

bool needs_model(EstimatorKind kind) {
  return kind == EstimatorKind::kDM || kind == EstimatorKind::kDR || kind == EstimatorKind::kSetDR;
}
bool needs_list_propensities(EstimatorKind kind) {
  return kind == EstimatorKind::kIPS || kind == EstimatorKind::kDR;
}
bool needs_set_propensities(EstimatorKind kind) {
  return kind == EstimatorKind::kSetIPS || kind == EstimatorKind::kSetDR;
}

ValueOracleConfig ValueOracleConfig::default_for(int num_responses, std::uint64_t seed) {
  if (num_responses <= 7) return exact();
  return monte_carlo(10000, seed);
}

std::string_view to_string(PropensitySource source) {
  switch (source) {
    case PropensitySource::kNone: return "none";
    case PropensitySource::kLogged: return "logged";
    case PropensitySource::kComputed: return "computed";
  }
  return "?";
}

namespace {

void check_target(const LoggedDataset& data, const PolicyTable& target) {
  if (data.interactions.empty()) throw InputError("dataset is empty");
  for (const auto& it : data.interactions) {
    if (it.query >= target.num_queries()) {
      throw InputError("evaluated policy has no distribution for query " +
                       std::to_string(it.query));
    }
    if (target.probs(it.query).size() != data.spec.num_responses) {
      throw InputError("evaluated policy distribution has the wrong length");
    }
  }
}

double expected_reward_exact(const Eigen::VectorXd& probs, const Eigen::VectorXd& scores,
                             int list_length) {
  CompensatedSum sum;
  detail::for_each_set_contribution<double>(
      probs, scores, list_length, [&](double v, std::span<const Response>) { sum.add(v); });
  return sum.value();
}

double expected_reward_mc(const Eigen::VectorXd& probs, const RewardModel& model, QueryIndex x,
                          int list_length, std::size_t samples, Rng rng) {
  CompensatedSum sum;
  for (std::size_t m = 0; m < samples; ++m) {
    const RankedList list = sample_list(probs, list_length, rng);
    sum.add(model.mean_reward(x, list));
  }
  return sum.value() / static_cast<double>(samples);
}

void require_oracle(const ValueOracleConfig& oracle, int num_responses, int list_length) {
  if (oracle.mode == ValueOracleConfig::Mode::kExact) {
    require_enumerable_lists(num_responses, list_length);
    require_enumerable_set(static_cast<std::size_t>(list_length));
  } else if (oracle.samples == 0) {
    throw InputError("Monte Carlo oracle needs at least one sample");
  }
}

EstimateReport finish(EstimatorKind kind, const std::vector<double>& terms,
                      const std::vector<double>& ratios, double alert_threshold,
                      PropensitySource source) {
  EstimateReport r;
  r.kind = kind;
  const auto me = mean_and_error(terms);
  r.value = me.mean;
  r.std_error = me.std_error;
  r.propensity_source = source;
  if (!ratios.empty()) {
    r.min_ratio = *std::min_element(ratios.begin(), ratios.end());
    r.max_ratio = *std::max_element(ratios.begin(), ratios.end());
    r.ratio_alerts = static_cast<std::size_t>(
        std::count_if(ratios.begin(), ratios.end(), [&](double x) { return x > alert_threshold; }));
  }
  return r;
}

}  // namespace

double expected_reward(const PolicyTable& policy, const RewardModel& model, QueryIndex x,
                       const ValueOracleConfig& oracle, int list_length) {
  const Eigen::VectorXd& probs = policy.probs(x);
  require_oracle(oracle, static_cast<int>(probs.size()), list_length);
  if (oracle.mode == ValueOracleConfig::Mode::kExact) {
    return expected_reward_exact(probs, model.scores(x), list_length);
  }
  return expected_reward_mc(probs, model, x, list_length, oracle.samples,
                            Rng(oracle.seed).split(static_cast<std::uint64_t>(x)));
}

double set_conditional_reward(const PolicyTable& policy, const RewardModel& model, QueryIndex x,
                              const ResponseSet& set) {
  const auto& members = set.members();
  const std::vector<double> joint = first_choice_joint(policy.probs(x), members);
  double nu = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    nu += joint[i];
    acc += joint[i] * model.first_reward(x, members[i], members);
  }
  return acc / nu;
}

EstimateReport estimate(EstimatorKind kind, const EvaluationContext& ctx,
                        const PolicyTable& target) {
  detail::check_estimator_inputs(kind, ctx);
  const LoggedDataset& data = *ctx.data;
  check_target(data, target);
  const int K = data.spec.list_length;
  if (needs_model(kind)) require_oracle(ctx.oracle, data.spec.num_responses, K);
  const detail::Propensities props(data, ctx.logging, kind);

  const std::size_t n = data.size();
  std::vector<double> terms(n);
  std::vector<double> ratios;
  std::vector<double> member;
  std::vector<double> first_rewards;
  double outside = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& it = data.interactions[t];
    const detail::RoundFacts f = detail::round_facts(kind, ctx, props, t, first_rewards);
    detail::load_members(target.probs(it.query), it.list.entries(), member, outside);
    const auto rt = detail::round_term<double>(kind, f, member, outside);
    double term = rt.term;
    if (!std::isnan(rt.ratio)) ratios.push_back(rt.ratio);
    if (needs_model(kind)) {
      term += expected_reward(target, *ctx.model, it.query, ctx.oracle, K);
    }
    terms[t] = term;
  }
  return finish(kind, terms, ratios, ctx.options.ratio_alert_threshold, props.source());
}

EstimateReport estimate_on_policy_count(const LoggedDataset& data) {
  if (data.interactions.empty()) throw InputError("dataset is empty");
  std::vector<double> terms;
  terms.reserve(data.size());
  for (const auto& it : data.interactions) terms.push_back(it.aligned() ? 1.0 : 0.0);
  return finish(EstimatorKind::kOnPolicyCount, terms, {}, 0.0, PropensitySource::kNone);
}

EstimateReport estimate_dm(const LoggedDataset& data, const PolicyTable& target,
                           const RewardModel& model, const ValueOracleConfig& oracle) {
  EvaluationContext ctx{&data, nullptr, &model, oracle, {}};
  return estimate(EstimatorKind::kDM, ctx, target);
}

EstimateReport estimate_ips(const LoggedDataset& data, const PolicyTable& target,
                            const PolicyTable* logging, const EstimatorOptions& options) {
  EvaluationContext ctx{&data, logging, nullptr, {}, options};
  return estimate(EstimatorKind::kIPS, ctx, target);
}

EstimateReport estimate_dr(const LoggedDataset& data, const PolicyTable& target,
                           const RewardModel& model, const ValueOracleConfig& oracle,
                           const PolicyTable* logging, const EstimatorOptions& options) {
  EvaluationContext ctx{&data, logging, &model, oracle, options};
  return estimate(EstimatorKind::kDR, ctx, target);
}

EstimateReport estimate_set_value(const LoggedDataset& data, const PolicyTable& target) {
  EvaluationContext ctx{&data, nullptr, nullptr, {}, {}};
  return estimate(EstimatorKind::kSetValue, ctx, target);
}

EstimateReport estimate_set_ips(const LoggedDataset& data, const PolicyTable& target,
                                const PolicyTable* logging, const EstimatorOptions& options) {
  EvaluationContext ctx{&data, logging, nullptr, {}, options};
  return estimate(EstimatorKind::kSetIPS, ctx, target);
}

EstimateReport estimate_set_dr(const LoggedDataset& data, const PolicyTable& target,
                               const RewardModel& model, const ValueOracleConfig& oracle,
                               const PolicyTable* logging, const EstimatorOptions& options) {
  EvaluationContext ctx{&data, logging, &model, oracle, options};
  return estimate(EstimatorKind::kSetDR, ctx, target);
}

double true_value(const ProblemSpec& spec, const PolicyTable& policy,
                  const ValueOracleConfig& oracle) {
  if (!spec.true_reward_param) throw InputError("true value needs the true reward parameter");
  if (spec.query_ids.empty()) throw InputError("problem has no rounds");
  const RewardModel truth(*spec.true_reward_param, spec.features);
  CompensatedSum sum;
  for (QueryIndex x : spec.query_ids) {
    sum.add(expected_reward(policy, truth, x, oracle, spec.list_length));
  }
  return sum.value() / static_cast<double>(spec.query_ids.size());
}

std::string estimate_csv_header() {
  return "policy,estimator,value,std_error,min_ratio,max_ratio,ratio_alerts,propensity_source";
}

std::string estimate_csv_row(const std::string& policy_name, const EstimateReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << policy_name << ',' << to_string(r.kind) << ',' << r.value << ',' << r.std_error << ',';
  if (r.min_ratio) os << *r.min_ratio;
  os << ',';
  if (r.max_ratio) os << *r.max_ratio;
  os << ',' << r.ratio_alerts << ',' << to_string(r.propensity_source);
  return os.str();
}

}  // namespace rankope
