#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rankope/reward.hpp"
#include "rankope/types.hpp"

namespace rankope {

enum class EstimatorKind { kOnPolicyCount, kDM, kIPS, kDR, kSetValue, kSetIPS, kSetDR };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator(std::string_view name);  // e.g. "dm", "set-ips"
bool needs_model(EstimatorKind kind);
bool needs_list_propensities(EstimatorKind kind);
bool needs_set_propensities(EstimatorKind kind);

// How expectations over A ~ pi(.|x) are computed.
struct ValueOracleConfig {
  enum class Mode { kExact, kMonteCarlo };
  Mode mode = Mode::kExact;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;

  static ValueOracleConfig exact() { return {}; }
  static ValueOracleConfig monte_carlo(std::size_t m, std::uint64_t seed) {
    return {Mode::kMonteCarlo, m, seed};
  }
  // Exact enumeration for L <= 7, Monte Carlo with 10 000 samples beyond.
  static ValueOracleConfig default_for(int num_responses, std::uint64_t seed = 0);
};

enum class PropensitySource { kNone, kLogged, kComputed };
std::string_view to_string(PropensitySource source);

struct EstimateReport {
  EstimatorKind kind = EstimatorKind::kDM;
  double value = 0.0;
  double std_error = 0.0;
  // Propensity-ratio diagnostics; empty for estimators without ratios.
  std::optional<double> min_ratio;
  std::optional<double> max_ratio;
  std::size_t ratio_alerts = 0;
  PropensitySource propensity_source = PropensitySource::kNone;
};

struct EstimatorOptions {
  double ratio_alert_threshold = 100.0;
  std::optional<double> max_ratio;  // clip; unset means unclipped
};

// Everything an estimator may read besides the evaluated policy. `logging`
// supplies propensities when the dataset does not carry them.
struct EvaluationContext {
  const LoggedDataset* data = nullptr;
  const PolicyTable* logging = nullptr;
  const RewardModel* model = nullptr;
  ValueOracleConfig oracle;
  EstimatorOptions options;
};

EstimateReport estimate(EstimatorKind kind, const EvaluationContext& ctx,
                        const PolicyTable& target);

EstimateReport estimate_on_policy_count(const LoggedDataset& data);
EstimateReport estimate_dm(const LoggedDataset& data, const PolicyTable& target,
                           const RewardModel& model,
                           const ValueOracleConfig& oracle = ValueOracleConfig::exact());
EstimateReport estimate_ips(const LoggedDataset& data, const PolicyTable& target,
                            const PolicyTable* logging = nullptr,
                            const EstimatorOptions& options = {});
EstimateReport estimate_dr(const LoggedDataset& data, const PolicyTable& target,
                           const RewardModel& model,
                           const ValueOracleConfig& oracle = ValueOracleConfig::exact(),
                           const PolicyTable* logging = nullptr,
                           const EstimatorOptions& options = {});
EstimateReport estimate_set_value(const LoggedDataset& data, const PolicyTable& target);
EstimateReport estimate_set_ips(const LoggedDataset& data, const PolicyTable& target,
                                const PolicyTable* logging = nullptr,
                                const EstimatorOptions& options = {});
EstimateReport estimate_set_dr(const LoggedDataset& data, const PolicyTable& target,
                               const RewardModel& model,
                               const ValueOracleConfig& oracle = ValueOracleConfig::exact(),
                               const PolicyTable* logging = nullptr,
                               const EstimatorOptions& options = {});

/// r(x, S; pi, w): expected model reward of a list drawn from pi conditioned on
/// its set being S.
double set_conditional_reward(const PolicyTable& policy, const RewardModel& model, QueryIndex x,
                              const ResponseSet& set);

/// E_{A ~ pi(.|x)} r(x, A; model), per the oracle.
double expected_reward(const PolicyTable& policy, const RewardModel& model, QueryIndex x,
                       const ValueOracleConfig& oracle, int list_length);

/// V(pi) over the problem's round queries, under the true reward parameter and
/// clean features.
double true_value(const ProblemSpec& spec, const PolicyTable& policy,
                  const ValueOracleConfig& oracle = ValueOracleConfig::exact());

// EstimateReport CSV (header + rows).
std::string estimate_csv_header();
std::string estimate_csv_row(const std::string& policy_name, const EstimateReport& report);

}  // namespace rankope
