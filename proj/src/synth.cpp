#include "rankope/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "rankope/error.hpp"
#include "rankope/estimators.hpp"
#include "rankope/plackett_luce.hpp"
#include "rankope/reward.hpp"
#include "rankope/summation.hpp"

namespace rankope {

void SynthConfig::validate() const {
  if (num_responses < 1) throw InputError("L must be positive");
  if (list_length < 1 || list_length > num_responses) throw InputError("K must be in [1, L]");
  if (num_rounds < 1) throw InputError("n must be positive");
  if (latent_dim < 1) throw InputError("latent dimension must be positive");
  if (reward_scale < 0.0 || logging_scale < 0.0 || eval_scale < 0.0) {
    throw InputError("perturbation scales must be nonnegative");
  }
  if (num_eval_policies < 1) throw InputError("need at least one evaluated policy");
  if (feature_noise < 0.0) throw InputError("feature noise must be nonnegative");
  if (runs < 1) throw InputError("runs must be positive");
}

FeatureTablePtr synthetic_features(int num_responses, std::size_t num_queries, int latent_dim,
                                   Rng rng) {
  auto draw = [&] {
    Eigen::VectorXd z(latent_dim);
    for (int i = 0; i < latent_dim; ++i) z[i] = rng.uniform(-1.0, 1.0);
    return z;
  };
  std::vector<Eigen::VectorXd> v;
  for (int a = 0; a < num_responses; ++a) v.push_back(draw());
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(num_queries);
  const int d = latent_dim * latent_dim;
  for (std::size_t q = 0; q < num_queries; ++q) {
    const Eigen::VectorXd u = draw();
    Eigen::MatrixXd phi(num_responses, d);
    for (int a = 0; a < num_responses; ++a) {
      for (int j = 0; j < latent_dim; ++j) {
        for (int i = 0; i < latent_dim; ++i) phi(a, i + latent_dim * j) = u[i] * v[a][j];
      }
    }
    tables.push_back(std::move(phi));
  }
  return std::make_shared<const FeatureTable>(num_responses, d, std::move(tables));
}

SynthProblem generate_problem(const SynthConfig& config, Rng& rng) {
  config.validate();
  const int d = config.feature_dim();
  auto gaussian = [&](double scale) {
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = scale * rng.normal();
    return z;
  };
  SynthProblem p;
  p.spec.num_responses = config.num_responses;
  p.spec.list_length = config.list_length;
  const Rng feature_rng = rng.split("features");
  p.feature_seed = feature_rng.seed();
  p.spec.features =
      synthetic_features(config.num_responses, config.num_rounds, config.latent_dim, feature_rng);
  p.spec.query_ids.resize(config.num_rounds);
  for (std::size_t t = 0; t < config.num_rounds; ++t) p.spec.query_ids[t] = t;
  const Eigen::VectorXd w = gaussian(config.reward_scale);
  p.spec.true_reward_param = w;
  const Eigen::VectorXd eps0 = gaussian(config.logging_scale);
  p.logging_theta = config.uniform_logging ? Eigen::VectorXd::Zero(d) : Eigen::VectorXd(w + eps0);
  for (int i = 0; i < config.num_eval_policies; ++i) {
    p.eval_thetas.push_back(p.logging_theta + gaussian(config.eval_scale));
  }
  p.spec.validate();
  return p;
}

LoggedDataset simulate_logs(const ProblemSpec& spec, const PolicyTable& logging, Rng& rng) {
  spec.validate();
  LoggedDataset data;
  data.spec = spec;
  data.interactions.reserve(spec.num_rounds());
  const bool with_sets = spec.list_length <= kMaxSetSize;
  for (QueryIndex x : spec.query_ids) {
    const Eigen::VectorXd& probs = logging.probs(x);
    LoggedInteraction it;
    it.query = x;
    it.list = sample_list(probs, spec.list_length, rng);
    it.human = sample_human_ranking(spec, x, it.list, rng);
    it.list_propensity = list_prob(probs, it.list);
    if (with_sets) it.set_propensity = set_prob(probs, ResponseSet(it.list));
    data.interactions.push_back(std::move(it));
  }
  return data;
}

LoggedDataset simulate_logs(const ProblemSpec& spec, const Eigen::VectorXd& logging_theta,
                            Rng& rng) {
  return simulate_logs(spec, PolicyTable::softmax(*spec.features, logging_theta), rng);
}

double absolute_error(std::span<const double> truths, std::span<const double> estimates) {
  if (truths.size() != estimates.size()) throw InputError("truths and estimates differ in length");
  if (truths.empty()) throw InputError("no policies to compare");
  CompensatedSum sum;
  for (std::size_t i = 0; i < truths.size(); ++i) sum.add(std::abs(truths[i] - estimates[i]));
  return sum.value() / static_cast<double>(truths.size());
}

double relative_error(std::span<const double> truths, std::span<const double> estimates) {
  if (truths.size() != estimates.size()) throw InputError("truths and estimates differ in length");
  if (truths.size() < 2) throw InputError("relative error needs at least two policies");
  auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  std::size_t wrong = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    for (std::size_t j = i + 1; j < truths.size(); ++j) {
      ++pairs;
      if (sign(estimates[i] - estimates[j]) != sign(truths[i] - truths[j])) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(pairs);
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kAbsolute: return "abs";
    case ExperimentKind::kRelative: return "rel";
    case ExperimentKind::kOptimization: return "optim";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::kAbsolute, ExperimentKind::kRelative,
                 ExperimentKind::kOptimization}) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown experiment kind '" + std::string(name) + "' (expected abs, rel, optim)");
}

std::string_view to_string(SweepParam param) {
  switch (param) {
    case SweepParam::kNone: return "none";
    case SweepParam::kListLength: return "K";
    case SweepParam::kNumRounds: return "n";
    case SweepParam::kFeatureNoise: return "sigma_phi";
    case SweepParam::kProblem: return "problem";
  }
  return "?";
}

SweepParam parse_sweep_param(std::string_view name) {
  for (auto p : {SweepParam::kNone, SweepParam::kListLength, SweepParam::kNumRounds,
                 SweepParam::kFeatureNoise, SweepParam::kProblem}) {
    if (to_string(p) == name) return p;
  }
  throw InputError("unknown sweep parameter '" + std::string(name) +
                   "' (expected none, K, n, sigma_phi, problem)");
}

std::vector<double> default_grid(SweepParam param, int num_responses) {
  switch (param) {
    case SweepParam::kNone: return {0.0};
    case SweepParam::kListLength: {
      std::vector<double> g;
      for (int k = 2; k <= num_responses; ++k) g.push_back(k);
      return g;
    }
    case SweepParam::kNumRounds: return {300, 1000, 3000, 10000};
    case SweepParam::kFeatureNoise: return {0.0, 0.5, 1.0, 2.0};
    case SweepParam::kProblem: return {1, 2, 3};
  }
  return {};
}

const ExperimentCell& ExperimentResult::cell(double sweep_value,
                                             const std::string& estimator) const {
  for (const auto& c : cells) {
    if (c.sweep_value == sweep_value && c.estimator == estimator) return c;
  }
  throw InputError("no result for " + estimator + " at " + std::to_string(sweep_value));
}

std::string ExperimentResult::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "sweep_param,sweep_value,estimator,mean_metric,std_error,runs\n";
  for (const auto& c : cells) {
    const auto me = mean_and_error(c.per_run);
    os << to_string(vary) << ',' << c.sweep_value << ',' << c.estimator << ',' << me.mean << ','
       << me.std_error << ',' << c.per_run.size() << '\n';
  }
  return os.str();
}

namespace {

using Metrics = std::vector<std::pair<std::string, double>>;

SynthConfig config_at(const SynthConfig& base, SweepParam vary, double value) {
  SynthConfig c = base;
  switch (vary) {
    case SweepParam::kNone: break;
    case SweepParam::kListLength: c.list_length = static_cast<int>(value); break;
    case SweepParam::kNumRounds: c.num_rounds = static_cast<std::size_t>(value); break;
    case SweepParam::kFeatureNoise: c.feature_noise = value; break;
    case SweepParam::kProblem: {
      const int problem = static_cast<int>(value);
      if (problem < 1 || problem > 3 || problem != value) {
        throw InputError("optimization problems are numbered 1 to 3");
      }
      c.num_rounds = 1000;
      c.list_length = problem == 3 ? 4 : 2;
      c.uniform_logging = problem != 2;
      break;
    }
  }
  c.validate();
  return c;
}

// Everything a replicate needs: problem, logs, and the fitted reward model.
struct Replicate {
  SynthProblem problem;
  LoggedDataset logs;
  PolicyTable logging;
  RewardModel model;
};

Replicate build_replicate(const SynthConfig& config, int r) {
  const Rng rep = Rng(config.seed).split(static_cast<std::uint64_t>(r));
  Rng problem_rng = rep.split("problem");
  Rng logs_rng = rep.split("logs");
  SynthProblem problem = generate_problem(config, problem_rng);
  PolicyTable logging = PolicyTable::softmax(*problem.spec.features, problem.logging_theta);
  LoggedDataset logs = simulate_logs(problem.spec, logging, logs_rng);
  const FeatureView view = config.feature_noise == 0.0
                               ? FeatureView::clean()
                               : FeatureView::noisy(config.feature_noise, rep.split("noise").seed());
  RewardModel model = fit_mle(logs, MleConfig{}, view);
  return {std::move(problem), std::move(logs), std::move(logging), std::move(model)};
}

const std::vector<EstimatorKind>& evaluated_estimators() {
  static const std::vector<EstimatorKind> kinds = {EstimatorKind::kDM, EstimatorKind::kIPS,
                                                   EstimatorKind::kDR, EstimatorKind::kSetIPS,
                                                   EstimatorKind::kSetDR};
  return kinds;
}

Metrics evaluation_replicate(const ExperimentOptions& options, const SynthConfig& config, int r) {
  const Replicate rep = build_replicate(config, r);
  const ProblemSpec& spec = rep.problem.spec;
  const ValueOracleConfig oracle =
      ValueOracleConfig::default_for(spec.num_responses, Rng(config.seed).split("oracle").seed());
  const EvaluationContext ctx{&rep.logs, &rep.logging, &rep.model, oracle, {}};

  std::vector<double> truths;
  std::vector<std::pair<std::string, std::vector<double>>> estimates;
  for (EstimatorKind kind : evaluated_estimators()) estimates.push_back({std::string(to_string(kind)), {}});
  const bool relative = options.kind == ExperimentKind::kRelative;
  if (relative) {
    estimates.push_back({"rlhf", {}});
    estimates.push_back({"dpo", {}});
  }
  const OptimizationProblem opt_problem{&rep.logs, &rep.logging, &rep.model};
  for (const Eigen::VectorXd& theta : rep.problem.eval_thetas) {
    const PolicyTable target = PolicyTable::softmax(*spec.features, theta);
    truths.push_back(true_value(spec, target, oracle));
    std::size_t e = 0;
    for (EstimatorKind kind : evaluated_estimators()) {
      estimates[e++].second.push_back(estimate(kind, ctx, target).value);
    }
    if (relative) {
      estimates[e++].second.push_back(rlhf_reward(opt_problem, theta));
      estimates[e++].second.push_back(dpo_objective(opt_problem, theta, options.optim.gamma,
                                                    options.optim.dpo_sigmoid));
    }
  }
  Metrics out;
  for (const auto& [name, values] : estimates) {
    out.emplace_back(name, relative ? relative_error(truths, values) : absolute_error(truths, values));
  }
  return out;
}

std::vector<Method> optimization_methods(const ExperimentOptions& options) {
  if (!options.methods.empty()) return options.methods;
  return {Method::kDM, Method::kIPS, Method::kDR, Method::kSetIPS, Method::kSetDR, Method::kRLHF,
          Method::kDPO};
}

Metrics optimization_replicate(const ExperimentOptions& options, const SynthConfig& config, int r) {
  const Replicate rep = build_replicate(config, r);
  const ProblemSpec& spec = rep.problem.spec;
  OptimConfig oc = options.optim;
  oc.seed = Rng(config.seed).split(static_cast<std::uint64_t>(r)).split("optimize").seed();
  const OptimizationProblem problem{&rep.logs, &rep.logging, &rep.model};
  Metrics out;
  out.emplace_back("logging", true_value(spec, rep.logging, oc.oracle));
  for (Method m : optimization_methods(options)) {
    const OptimizeResult res = optimize(m, problem, rep.problem.logging_theta, oc);
    out.emplace_back(std::string(to_string(m)),
                     true_value(spec, PolicyTable::softmax(*spec.features, res.theta), oc.oracle));
  }
  return out;
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError(context + e.what());
  } catch (const DataError& e) {
    throw DataError(context + e.what());
  } catch (const UnsupportedSizeError& e) {
    throw UnsupportedSizeError(context + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(context + e.what(), e.grad_norm());
  } catch (const DivergenceError& e) {
    throw DivergenceError(context + e.what(), e.step());
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentOptions& options) {
  options.config.validate();
  if (options.parallel < 1) throw InputError("parallel must be at least 1");
  ExperimentResult result;
  result.vary = options.vary;
  if (options.kind == ExperimentKind::kOptimization && options.vary != SweepParam::kProblem) {
    if (options.vary != SweepParam::kNone) {
      throw InputError("optimization experiments vary the problem only");
    }
    result.vary = SweepParam::kProblem;
  }
  if (options.kind != ExperimentKind::kOptimization && options.vary == SweepParam::kProblem) {
    throw InputError("only optimization experiments vary the problem");
  }
  const std::vector<double> grid = options.grid.empty()
                                       ? default_grid(result.vary, options.config.num_responses)
                                       : options.grid;
  const int runs = options.config.runs;

  for (double value : grid) {
    const SynthConfig config = config_at(options.config, result.vary, value);
    std::vector<Metrics> per_run(static_cast<std::size_t>(runs));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(runs));
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int r = next++; r < runs; r = next++) {
        try {
          try {
            per_run[r] = options.kind == ExperimentKind::kOptimization
                             ? optimization_replicate(options, config, r)
                             : evaluation_replicate(options, config, r);
          } catch (const Error&) {
            std::ostringstream ctx;
            ctx << "replicate " << r << " at " << to_string(result.vary) << '=' << value << ": ";
            rethrow_with_context(ctx.str());
          }
        } catch (...) {
          errors[r] = std::current_exception();
        }
      }
    };
    const int threads = std::min(options.parallel, runs);
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t k = 0; k < per_run.front().size(); ++k) {
      ExperimentCell c;
      c.sweep_value = value;
      c.estimator = per_run.front()[k].first;
      for (const auto& m : per_run) c.per_run.push_back(m[k].second);
      result.cells.push_back(std::move(c));
    }
  }
  return result;
}

}  // namespace rankope
