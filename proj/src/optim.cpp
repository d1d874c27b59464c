#include "rankope/optim.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rankope/detail/gradients.hpp"
#include "rankope/error.hpp"
#include "rankope/plackett_luce.hpp"
#include "rankope/summation.hpp"

namespace rankope {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kDM: return "dm";
    case Method::kIPS: return "ips";
    case Method::kDR: return "dr";
    case Method::kSetValue: return "set";
    case Method::kSetIPS: return "set-ips";
    case Method::kSetDR: return "set-dr";
    case Method::kRLHF: return "rlhf";
    case Method::kDPO: return "dpo";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::kDM, Method::kIPS, Method::kDR, Method::kSetValue, Method::kSetIPS,
                 Method::kSetDR, Method::kRLHF, Method::kDPO}) {
    if (to_string(m) == name) return m;
  }
  throw InputError("unknown method '" + std::string(name) +
                   "' (expected dm, ips, dr, set, set-ips, set-dr, rlhf, dpo)");
}

bool is_estimator_method(Method method) {
  return method != Method::kRLHF && method != Method::kDPO;
}

EstimatorKind estimator_of(Method method) {
  switch (method) {
    case Method::kDM: return EstimatorKind::kDM;
    case Method::kIPS: return EstimatorKind::kIPS;
    case Method::kDR: return EstimatorKind::kDR;
    case Method::kSetValue: return EstimatorKind::kSetValue;
    case Method::kSetIPS: return EstimatorKind::kSetIPS;
    case Method::kSetDR: return EstimatorKind::kSetDR;
    default: break;
  }
  throw InputError(std::string(to_string(method)) + " is not an estimator");
}

bool method_needs_model(Method method) {
  if (method == Method::kRLHF) return true;
  if (method == Method::kDPO) return false;
  return needs_model(estimator_of(method));
}

namespace {

void check_problem(Method method, const OptimizationProblem& problem) {
  if (problem.data == nullptr) throw InputError("no dataset to optimize on");
  if (problem.data->interactions.empty()) throw InputError("dataset is empty");
  if (problem.logging == nullptr) throw InputError("optimization needs the logging policy");
  if (method_needs_model(method) && problem.model == nullptr) {
    throw InputError(std::string(to_string(method)) + " needs a fitted reward model");
  }
}

EvaluationContext context_for(const OptimizationProblem& problem, const OptimConfig& config) {
  return {problem.data, problem.logging, problem.model, config.oracle, config.estimator_options};
}

double log_sigmoid(double z) {
  // log(1 / (1 + e^-z)) without overflow
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct DpoPair {
  Response preferred;
  Response dispreferred;
};

DpoPair dpo_pair(const LoggedInteraction& it) {
  if (it.human.size() < 2) throw InputError("DPO needs at least two ranked responses per round");
  return {it.human[0], it.human[1]};
}

// gamma * (log-ratio of the preferred response - log-ratio of the dispreferred)
double dpo_margin(const Eigen::VectorXd& log_p, const Eigen::VectorXd& ref, const DpoPair& pair,
                  double gamma) {
  const auto a = pair.preferred - 1;
  const auto b = pair.dispreferred - 1;
  return gamma * ((log_p[a] - std::log(ref[a])) - (log_p[b] - std::log(ref[b])));
}

Eigen::VectorXd mean_kl_grad(const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                             const OptimConfig& config, GradientMode mode, Rng* rng) {
  const LoggedDataset& data = *problem.data;
  const FeatureTable& features = *data.spec.features;
  const int K = data.spec.list_length;
  const int length = config.kl_scope == KlScope::kResponse ? 1 : K;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad_probs(data.spec.num_responses);
  for (const auto& it : data.interactions) {
    const Eigen::MatrixXd& phi = features.matrix(it.query);
    const Eigen::VectorXd p = softmax(phi * theta);
    const Eigen::VectorXd& q = problem.logging->probs(it.query);
    grad_probs.setZero();
    if (mode == GradientMode::kExact) {
      detail::add_kl_grad_probs(p, q, config.kl_scope, K, grad_probs);
    } else {
      const RankedList sample = sample_list(p, length, *rng);
      detail::add_kl_sample_grad_probs(p, q, sample.entries(), grad_probs);
    }
    g += detail::chain_softmax(phi, p, grad_probs);
  }
  return g / static_cast<double>(data.size());
}

Eigen::VectorXd rlhf_reward_grad(const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                                 GradientMode mode, Rng* rng) {
  const LoggedDataset& data = *problem.data;
  const FeatureTable& features = *data.spec.features;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  for (const auto& it : data.interactions) {
    const Eigen::MatrixXd& phi = features.matrix(it.query);
    const Eigen::VectorXd p = softmax(phi * theta);
    const Eigen::VectorXd& r = problem.model->scores(it.query);
    if (mode == GradientMode::kExact) {
      g += phi.transpose() * (p.array() * (r.array() - p.dot(r))).matrix();
    } else {
      const Response a = sample_list(p, 1, *rng).first();
      const Response single[] = {a};
      g += grad_log_list_prob(features, it.query, theta, single) * r[a - 1];
    }
  }
  return g / static_cast<double>(data.size());
}

}  // namespace

double mean_kl(const OptimizationProblem& problem, const Eigen::VectorXd& theta, KlScope scope) {
  const LoggedDataset& data = *problem.data;
  const FeatureTable& features = *data.spec.features;
  CompensatedSum sum;
  for (const auto& it : data.interactions) {
    const Eigen::VectorXd p = softmax(features.matrix(it.query) * theta);
    const Eigen::VectorXd& q = problem.logging->probs(it.query);
    sum.add(scope == KlScope::kResponse ? kl_response(p, q)
                                        : kl_list(p, q, data.spec.list_length));
  }
  return sum.value() / static_cast<double>(data.size());
}

double rlhf_reward(const OptimizationProblem& problem, const Eigen::VectorXd& theta) {
  const LoggedDataset& data = *problem.data;
  const FeatureTable& features = *data.spec.features;
  CompensatedSum sum;
  for (const auto& it : data.interactions) {
    const Eigen::VectorXd p = softmax(features.matrix(it.query) * theta);
    sum.add(p.dot(problem.model->scores(it.query)));
  }
  return sum.value() / static_cast<double>(data.size());
}

double dpo_objective(const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                     double gamma, DpoSigmoid sigmoid_form) {
  const LoggedDataset& data = *problem.data;
  const FeatureTable& features = *data.spec.features;
  CompensatedSum sum;
  for (const auto& it : data.interactions) {
    const Eigen::VectorXd log_p = log_softmax(features.matrix(it.query) * theta);
    const double z = dpo_margin(log_p, problem.logging->probs(it.query), dpo_pair(it), gamma);
    sum.add(log_sigmoid(sigmoid_form == DpoSigmoid::kStandard ? z : -z));
  }
  return sum.value();
}

Eigen::VectorXd dpo_grad(const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                         double gamma, DpoSigmoid sigmoid_form) {
  const LoggedDataset& data = *problem.data;
  const FeatureTable& features = *data.spec.features;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  for (const auto& it : data.interactions) {
    const Eigen::MatrixXd& phi = features.matrix(it.query);
    const Eigen::VectorXd log_p = log_softmax(phi * theta);
    const DpoPair pair = dpo_pair(it);
    const double z = dpo_margin(log_p, problem.logging->probs(it.query), pair, gamma);
    // d/dz log sigma(z) = 1 - sigma(z); d/dz log sigma(-z) = -sigma(z)
    const double c = sigmoid_form == DpoSigmoid::kStandard ? 1.0 - sigmoid(z) : -sigmoid(z);
    g += (c * gamma) *
         (phi.row(pair.preferred - 1) - phi.row(pair.dispreferred - 1)).transpose();
  }
  return g;
}

double objective(Method method, const OptimizationProblem& problem, const Eigen::VectorXd& theta,
                 const OptimConfig& config) {
  check_problem(method, problem);
  if (method == Method::kDPO) {
    return dpo_objective(problem, theta, config.gamma, config.dpo_sigmoid);
  }
  const double kl = config.gamma == 0.0 ? 0.0 : mean_kl(problem, theta, config.kl_scope);
  if (method == Method::kRLHF) return rlhf_reward(problem, theta) - config.gamma * kl;
  const PolicyTable target = PolicyTable::softmax(*problem.data->spec.features, theta);
  const EstimateReport r = estimate(estimator_of(method), context_for(problem, config), target);
  return r.value - config.gamma * kl;
}

Eigen::VectorXd objective_grad(Method method, const OptimizationProblem& problem,
                               const Eigen::VectorXd& theta, const OptimConfig& config,
                               GradientMode mode, Rng* rng) {
  check_problem(method, problem);
  if (mode == GradientMode::kSingleSample && rng == nullptr) {
    throw InputError("single-sample gradients need a random generator");
  }
  if (method == Method::kDPO) return dpo_grad(problem, theta, config.gamma, config.dpo_sigmoid);
  Eigen::VectorXd g = method == Method::kRLHF
                          ? rlhf_reward_grad(problem, theta, mode, rng)
                          : value_grad(estimator_of(method), context_for(problem, config), theta,
                                       mode, rng);
  if (config.gamma != 0.0) g -= config.gamma * mean_kl_grad(problem, theta, config, mode, rng);
  return g;
}

std::string TrainTrace::to_csv(bool with_header) const {
  std::ostringstream os;
  os.precision(17);
  if (with_header) os << "step,raw_value,smoothed_value,true_value,kl,objective,method\n";
  for (const auto& r : records) {
    os << r.step << ',' << r.raw_value << ',' << r.smoothed_value << ',' << r.true_value << ','
       << r.kl << ',' << r.objective << ',' << to_string(method) << '\n';
  }
  return os.str();
}

namespace {

// Set-value estimate of the policy on a fresh on-policy probe: lists drawn from
// the policy, feedback from the true reward parameter.
double probe_value(const LoggedDataset& data, const Eigen::VectorXd& theta, std::size_t size,
                   Rng& rng) {
  const ProblemSpec& spec = data.spec;
  CompensatedSum sum;
  for (std::size_t j = 0; j < size; ++j) {
    const QueryIndex x = data.interactions[j % data.size()].query;
    const Eigen::VectorXd p = softmax(spec.features->matrix(x) * theta);
    const RankedList list = sample_list(p, spec.list_length, rng);
    const HumanRanking human = sample_human_ranking(spec, x, list, rng);
    sum.add(first_given_set(p, ResponseSet(list), human.top()));
  }
  return sum.value() / static_cast<double>(size);
}

bool can_compute_true_value(const ProblemSpec& spec, const ValueOracleConfig& oracle) {
  if (!spec.true_reward_param || spec.query_ids.empty()) return false;
  if (oracle.mode == ValueOracleConfig::Mode::kMonteCarlo) return true;
  return spec.list_length <= kMaxSetSize &&
         num_ordered_lists(spec.num_responses, spec.list_length) <= kMaxEnumeratedLists;
}

}  // namespace

OptimizeResult optimize(Method method, const OptimizationProblem& problem,
                        const Eigen::VectorXd& init_theta, const OptimConfig& config) {
  check_problem(method, problem);
  const LoggedDataset& data = *problem.data;
  if (init_theta.size() != data.spec.feature_dim()) {
    throw InputError("initial parameter has the wrong dimension");
  }
  if (!(config.gamma >= 0.0)) throw InputError("gamma must be nonnegative");
  if (config.steps < 0) throw InputError("steps must be nonnegative");
  if (config.record_every < 0) throw InputError("record_every must be nonnegative");
  if (config.smoothing_window < 1) throw InputError("smoothing window must be positive");

  const Rng root(config.seed);
  Rng grad_rng = root.split("gradient");
  Rng probe_rng = root.split("probe");
  const GradientMode mode =
      method == Method::kRLHF ? config.rlhf_gradient_mode : config.gradient_mode;
  const bool with_probe = data.spec.true_reward_param.has_value() && config.probe_size > 0;
  const bool with_truth = can_compute_true_value(data.spec, config.oracle);
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  OptimizeResult result;
  result.theta = init_theta;
  result.trace.method = method;
  result.trace.smoothing_window = config.smoothing_window;
  Adam adam(init_theta.size(), config.adam);
  Eigen::VectorXd& theta = result.theta;

  auto record = [&](int step) {
    TrainRecord r;
    r.step = step;
    r.objective = objective(method, problem, theta, config);
    if (!std::isfinite(r.objective)) {
      throw DivergenceError("objective is not finite at step " + std::to_string(step),
                            static_cast<std::size_t>(step));
    }
    r.kl = mean_kl(problem, theta, config.kl_scope);
    r.raw_value = with_probe ? probe_value(data, theta, config.probe_size, probe_rng) : nan;
    r.true_value = with_truth
                       ? true_value(data.spec, PolicyTable::softmax(*data.spec.features, theta),
                                    config.oracle)
                       : nan;
    result.trace.records.push_back(r);
  };

  for (int s = 0; s <= config.steps; ++s) {
    const bool due = config.record_every == 0 ? (s == 0 || s == config.steps)
                                              : (s % config.record_every == 0 || s == config.steps);
    if (due) record(s);
    if (s == config.steps) break;
    const Eigen::VectorXd g = objective_grad(method, problem, theta, config, mode, &grad_rng);
    if (!g.allFinite()) {
      throw DivergenceError("gradient is not finite at step " + std::to_string(s),
                            static_cast<std::size_t>(s));
    }
    adam.ascend(theta, g);
    if (!theta.allFinite()) {
      throw DivergenceError("parameters are not finite after step " + std::to_string(s),
                            static_cast<std::size_t>(s));
    }
  }

  auto& records = result.trace.records;
  for (std::size_t i = 0; i < records.size(); ++i) {
    CompensatedSum sum;
    int count = 0;
    for (std::size_t j = i + 1; j-- > 0;) {
      if (records[j].step <= records[i].step - config.smoothing_window) break;
      sum.add(records[j].raw_value);
      ++count;
    }
    records[i].smoothed_value = sum.value() / count;
  }
  return result;
}

}  // namespace rankope
