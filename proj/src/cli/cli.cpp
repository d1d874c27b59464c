#include "rankope/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rankope/dataset_io.hpp"
#include "rankope/error.hpp"
#include "rankope/estimators.hpp"
#include "rankope/optim.hpp"
#include "rankope/reward.hpp"
#include "rankope/synth.hpp"

namespace rankope::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Bad command line: exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum class Check { kAny, kPositive, kNonNegative, kUnit };

struct OptionDef {
  std::string name;  // flag without dashes; also the config-file key
  json fallback;     // default value; its JSON type fixes the option's type
  std::string help;
  Check check = Check::kAny;
};

using Options = std::vector<OptionDef>;

// ---- Option tables ---------------------------------------------------------

const Options& common_options() {
  static const Options o = {
      {"seed", json(std::uint64_t{0}), "master seed (env OPE_RANK_SEED overrides the config file)"},
      {"out", json("."), "output directory"},
  };
  return o;
}

Options command_options(const std::string& command) {
  Options o;
  if (command == "generate") {
    o = {
        {"L", 7, "number of responses", Check::kPositive},
        {"K", 2, "list length", Check::kPositive},
        {"n", 3000, "number of rounds (one query per round)", Check::kPositive},
        {"latent-dim", 4, "latent dimension of u_x and v_a", Check::kPositive},
        {"reward-scale", 10.0, "standard deviation of the true reward parameter", Check::kNonNegative},
        {"logging-scale", 5.0, "logging policy perturbation", Check::kNonNegative},
        {"sigma-e", 5.0, "evaluated policy perturbation", Check::kNonNegative},
        {"num-eval-policies", 5, "number of evaluated policies", Check::kPositive},
        {"uniform-logging", false, "use the uniform logging policy"},
        {"inline-features", false, "write the feature table into the header"},
    };
  } else if (command == "validate") {
    o = {{"data", "", "dataset header JSON"}};
  } else if (command == "evaluate") {
    o = {
        {"data", "", "dataset header JSON"},
        {"policy", "", "evaluated policy file (theta or probs)"},
        {"policy-b", "", "second policy file for a mixture"},
        {"alpha", 0.0, "mixture weight of policy-b", Check::kUnit},
        {"logging", "", "logging policy file, used when propensities are not logged"},
        {"model", "", "fitted reward model JSON; fitted on the data when omitted"},
        {"estimators", "dm,ips,dr,set-ips,set-dr", "comma-separated estimator names"},
        {"oracle", "auto", "auto, exact or mc"},
        {"mc-samples", 10000, "Monte Carlo samples per query", Check::kPositive},
        {"ridge", 1e-4, "ridge strength of the reward-model fit", Check::kNonNegative},
        {"feature-noise", 0.0, "reward-model feature noise sigma_phi", Check::kNonNegative},
        {"max-ratio", 0.0, "clip propensity ratios at this value (0 disables)", Check::kNonNegative},
        {"alert-threshold", 100.0, "count ratios above this value", Check::kPositive},
    };
  } else if (command == "optimize") {
    o = {
        {"data", "", "dataset header JSON"},
        {"method", "", "dm, ips, dr, set, set-ips, set-dr, rlhf or dpo"},
        {"logging", "", "logging policy file"},
        {"init", "", "initial theta file; defaults to the logging theta or zero"},
        {"model", "", "fitted reward model JSON; fitted on the data when omitted"},
        {"ridge", 1e-4, "ridge strength of the reward-model fit", Check::kNonNegative},
        {"feature-noise", 0.0, "reward-model feature noise sigma_phi", Check::kNonNegative},
        {"gamma", 1e-3, "KL weight (DPO temperature)", Check::kNonNegative},
        {"steps", 5000, "Adam steps", Check::kNonNegative},
        {"step-size", 1e-2, "Adam step size", Check::kPositive},
        {"beta1", 0.9, "Adam beta1", Check::kUnit},
        {"beta2", 0.999, "Adam beta2", Check::kUnit},
        {"epsilon", 1e-8, "Adam epsilon", Check::kPositive},
        {"gradient-mode", "single-sample", "single-sample or exact"},
        {"kl-scope", "response", "response or list"},
        {"dpo-sigmoid", "standard", "standard or paper"},
        {"record-every", 10, "steps between trace records (0: first and last only)", Check::kNonNegative},
        {"probe-size", 500, "on-policy probe rounds per record", Check::kNonNegative},
        {"smoothing-window", 50, "trace smoothing window in steps", Check::kPositive},
    };
  } else if (command == "sweep") {
    o = {
        {"kind", "abs", "abs, rel or optim"},
        {"vary", "none", "none, K, n, sigma_phi or problem"},
        {"grid", "", "comma-separated grid values (default grid when empty)"},
        {"runs", 50, "replicates per grid point", Check::kPositive},
        {"parallel", 1, "replicate worker threads", Check::kPositive},
        {"L", 7, "number of responses", Check::kPositive},
        {"K", 2, "list length", Check::kPositive},
        {"n", 3000, "number of rounds", Check::kPositive},
        {"sigma-e", 5.0, "evaluated policy perturbation", Check::kNonNegative},
        {"num-eval-policies", 5, "number of evaluated policies", Check::kPositive},
        {"feature-noise", 0.0, "reward-model feature noise sigma_phi", Check::kNonNegative},
        {"methods", "", "optimization methods (default: all but set)"},
        {"gamma", 1e-3, "KL weight (DPO temperature)", Check::kNonNegative},
        {"steps", 5000, "Adam steps per optimization", Check::kNonNegative},
        {"step-size", 1e-2, "Adam step size", Check::kPositive},
        {"gradient-mode", "single-sample", "single-sample or exact"},
    };
  } else {
    throw UsageError("unknown command '" + command +
                     "' (expected generate, validate, evaluate, optimize, sweep)");
  }
  for (const auto& c : common_options()) o.push_back(c);
  return o;
}

// ---- Option resolution -----------------------------------------------------

json parse_value(const OptionDef& def, const std::string& text) {
  try {
    std::size_t used = 0;
    if (def.fallback.is_number_unsigned()) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      const auto v = std::stoull(text, &used);
      if (used == text.size()) return v;
    } else if (def.fallback.is_number_integer()) {
      const auto v = std::stoll(text, &used);
      if (used == text.size()) return v;
    } else if (def.fallback.is_number_float()) {
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } else {
      return text;
    }
  } catch (const std::exception&) {
  }
  throw UsageError("--" + def.name + ": cannot parse '" + text + "'");
}

template <class E>
void check_value(const OptionDef& def, const json& value) {
  if (def.fallback.is_boolean()) {
    if (!value.is_boolean()) throw E("--" + def.name + " must be true or false");
    return;
  }
  if (def.fallback.is_string()) {
    if (!value.is_string()) throw E("--" + def.name + " must be a string");
    return;
  }
  if (!value.is_number()) throw E("--" + def.name + " must be a number");
  if (def.fallback.is_number_integer() && !value.is_number_integer()) {
    throw E("--" + def.name + " must be an integer");
  }
  if (def.fallback.is_number_unsigned() && value.is_number_integer() && value.get<double>() < 0) {
    throw E("--" + def.name + " must be nonnegative");
  }
  const double v = value.get<double>();
  switch (def.check) {
    case Check::kAny: break;
    case Check::kPositive:
      if (!(v > 0)) throw E("--" + def.name + " must be positive");
      break;
    case Check::kNonNegative:
      if (!(v >= 0)) throw E("--" + def.name + " must be nonnegative");
      break;
    case Check::kUnit:
      if (!(v >= 0 && v <= 1)) throw E("--" + def.name + " must lie in [0, 1]");
      break;
  }
}

// Defaults, then the config file, then OPE_RANK_SEED, then explicit flags.
json resolve_config(const Options& defs, const json& file_config,
                    const std::map<std::string, json>& flags) {
  json cfg = json::object();
  for (const auto& d : defs) cfg[d.name] = d.fallback;
  if (!file_config.is_null()) {
    if (!file_config.is_object()) throw InputError("config file must hold a JSON object");
    for (const auto& [key, value] : file_config.items()) {
      const auto def = std::find_if(defs.begin(), defs.end(), [&](const auto& d) { return d.name == key; });
      if (def == defs.end()) throw InputError("config file: unknown option '" + key + "'");
      check_value<InputError>(*def, value);
      cfg[key] = value;
    }
  }
  if (const char* env = std::getenv("OPE_RANK_SEED"); env != nullptr && *env != '\0') {
    const OptionDef& seed_def = common_options().front();
    try {
      cfg["seed"] = parse_value(seed_def, env);
    } catch (const UsageError&) {
      throw InputError(std::string("OPE_RANK_SEED is not a valid seed: '") + env + "'");
    }
  }
  for (const auto& [key, value] : flags) {
    const auto def = std::find_if(defs.begin(), defs.end(), [&](const auto& d) { return d.name == key; });
    check_value<UsageError>(*def, value);
    cfg[key] = value;
  }
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string require_path(const json& cfg, const char* key) {
  const std::string p = cfg.at(key).get<std::string>();
  if (p.empty()) throw UsageError(std::string("--") + key + " is required");
  return p;
}

// ---- Run bookkeeping -------------------------------------------------------

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunContext {
  std::string command;
  json config;
  fs::path out_dir;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::ostream& out;

  void write(const std::string& name, const std::string& content) {
    write_text(out_dir / name, content);
    outputs.push_back(name);
  }
  void write_manifest(const std::string& started, double seconds) const {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = config.at("seed");
    m["versions"] = {{"rankope", kVersion}, {"manifest_format", 1}};
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["wall_clock"] = {{"started", started}, {"seconds", seconds}};
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
  }
};

std::uint64_t seed_of(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

RewardModel obtain_model(RunContext& run, const LoggedDataset& data) {
  const std::string path = run.config.at("model").get<std::string>();
  if (!path.empty()) {
    run.inputs.push_back(path);
    return load_model(path, data.spec.features);
  }
  MleConfig mle;
  mle.ridge = run.config.at("ridge").get<double>();
  const double sigma = run.config.at("feature-noise").get<double>();
  const FeatureView view =
      sigma == 0.0 ? FeatureView::clean() : FeatureView::noisy(sigma, Rng(seed_of(run.config)).split("noise").seed());
  RewardModel model = fit_mle(data, mle, view);
  save_model(run.out_dir / "model.json", model);
  run.outputs.push_back("model.json");
  return model;
}

// ---- Commands --------------------------------------------------------------

void cmd_generate(RunContext& run) {
  const json& c = run.config;
  SynthConfig sc;
  sc.num_responses = c.at("L").get<int>();
  sc.list_length = c.at("K").get<int>();
  sc.num_rounds = c.at("n").get<std::size_t>();
  sc.latent_dim = c.at("latent-dim").get<int>();
  sc.reward_scale = c.at("reward-scale").get<double>();
  sc.logging_scale = c.at("logging-scale").get<double>();
  sc.eval_scale = c.at("sigma-e").get<double>();
  sc.num_eval_policies = c.at("num-eval-policies").get<int>();
  sc.uniform_logging = c.at("uniform-logging").get<bool>();
  sc.seed = seed_of(c);
  const Rng root(sc.seed);
  Rng problem_rng = root.split("problem");
  Rng logs_rng = root.split("logs");
  const SynthProblem p = generate_problem(sc, problem_rng);
  const LoggedDataset data = simulate_logs(p.spec, p.logging_theta, logs_rng);

  FeatureSource source;
  source.latent_dim = sc.latent_dim;
  if (!c.at("inline-features").get<bool>()) source.synthetic_seed = p.feature_seed;
  save_dataset(data, run.out_dir / "dataset.json", source);
  run.outputs.push_back("dataset.json");
  run.outputs.push_back("dataset.jsonl");
  save_theta(run.out_dir / "logging_policy.json", p.logging_theta);
  run.outputs.push_back("logging_policy.json");
  for (std::size_t i = 0; i < p.eval_thetas.size(); ++i) {
    const std::string name = "eval_policy_" + std::to_string(i + 1) + ".json";
    save_theta(run.out_dir / name, p.eval_thetas[i]);
    run.outputs.push_back(name);
  }
  run.out << "wrote " << data.size() << " interactions to " << (run.out_dir / "dataset.jsonl").string()
          << '\n';
}

void cmd_validate(RunContext& run) {
  const std::string path = require_path(run.config, "data");
  run.inputs.push_back(path);
  const LoggedDataset data = load_dataset(path);
  std::ostringstream os;
  os << "valid dataset: n=" << data.size() << " L=" << data.spec.num_responses
     << " K=" << data.spec.list_length << " d=" << data.spec.feature_dim()
     << " queries=" << data.spec.features->num_queries()
     << " list_propensity=" << (data.has_list_propensities() ? "yes" : "no")
     << " set_propensity=" << (data.has_set_propensities() ? "yes" : "no")
     << " true_reward_param=" << (data.spec.true_reward_param ? "yes" : "no") << '\n';
  run.write("validation.txt", os.str());
  run.out << os.str();
}

ValueOracleConfig oracle_from(const json& c, int num_responses) {
  const std::string mode = c.at("oracle").get<std::string>();
  const std::uint64_t seed = Rng(seed_of(c)).split("oracle").seed();
  if (mode == "auto") return ValueOracleConfig::default_for(num_responses, seed);
  if (mode == "exact") return ValueOracleConfig::exact();
  if (mode == "mc") return ValueOracleConfig::monte_carlo(c.at("mc-samples").get<std::size_t>(), seed);
  throw UsageError("--oracle must be auto, exact or mc");
}

void cmd_evaluate(RunContext& run) {
  const json& c = run.config;
  const std::string data_path = require_path(c, "data");
  const std::string policy_path = require_path(c, "policy");
  run.inputs.push_back(data_path);
  const LoggedDataset data = load_dataset(data_path);
  const FeatureTable& features = *data.spec.features;

  run.inputs.push_back(policy_path);
  PolicyTable target = policy_table(load_policy(policy_path), features);
  std::string policy_name = fs::path(policy_path).stem().string();
  const std::string policy_b = c.at("policy-b").get<std::string>();
  const double alpha = c.at("alpha").get<double>();
  if (!policy_b.empty()) {
    run.inputs.push_back(policy_b);
    target = PolicyTable::mixture(target, policy_table(load_policy(policy_b), features), alpha);
    std::ostringstream name;
    // no commas: the name is a CSV field
    name << "mixture(" << policy_name << '+' << fs::path(policy_b).stem().string() << '@' << alpha
         << ')';
    policy_name = name.str();
  } else if (alpha != 0.0) {
    throw UsageError("--alpha needs --policy-b");
  }

  std::optional<PolicyTable> logging;
  if (const std::string lp = c.at("logging").get<std::string>(); !lp.empty()) {
    run.inputs.push_back(lp);
    logging = policy_table(load_policy(lp), features);
  }

  std::vector<EstimatorKind> kinds;
  for (const auto& name : split_list(c.at("estimators").get<std::string>())) {
    try {
      kinds.push_back(parse_estimator(name));
    } catch (const InputError& e) {
      throw UsageError(e.what());
    }
  }
  if (kinds.empty()) throw UsageError("--estimators is empty");

  std::optional<RewardModel> model;
  for (auto k : kinds) {
    if (needs_model(k)) {
      model = obtain_model(run, data);
      break;
    }
  }
  EstimatorOptions eo;
  eo.ratio_alert_threshold = c.at("alert-threshold").get<double>();
  if (const double m = c.at("max-ratio").get<double>(); m > 0.0) eo.max_ratio = m;
  const EvaluationContext ctx{&data, logging ? &*logging : nullptr, model ? &*model : nullptr,
                              oracle_from(c, data.spec.num_responses), eo};

  std::string csv = estimate_csv_header() + "\n";
  for (auto k : kinds) {
    const EstimateReport r = k == EstimatorKind::kOnPolicyCount ? estimate_on_policy_count(data)
                                                                 : estimate(k, ctx, target);
    csv += estimate_csv_row(policy_name, r) + "\n";
  }
  run.write("estimates.csv", csv);
  run.out << csv;
}

void cmd_optimize(RunContext& run) {
  const json& c = run.config;
  const std::string data_path = require_path(c, "data");
  run.inputs.push_back(data_path);
  const LoggedDataset data = load_dataset(data_path);
  const FeatureTable& features = *data.spec.features;
  Method method;
  try {
    method = parse_method(require_path(c, "method"));
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }

  const std::string logging_path = require_path(c, "logging");
  run.inputs.push_back(logging_path);
  const PolicyFile logging_file = load_policy(logging_path);
  const PolicyTable logging = policy_table(logging_file, features);

  Eigen::VectorXd init = Eigen::VectorXd::Zero(features.dim());
  if (const std::string ip = c.at("init").get<std::string>(); !ip.empty()) {
    run.inputs.push_back(ip);
    const PolicyFile f = load_policy(ip);
    if (!std::holds_alternative<Eigen::VectorXd>(f)) throw DataError("--init must hold a theta");
    init = std::get<Eigen::VectorXd>(f);
  } else if (const auto* theta = std::get_if<Eigen::VectorXd>(&logging_file)) {
    init = *theta;
  }
  if (init.size() != features.dim()) throw DataError("initial theta does not have length d");

  std::optional<RewardModel> model;
  if (method_needs_model(method)) model = obtain_model(run, data);

  OptimConfig oc;
  oc.gamma = c.at("gamma").get<double>();
  oc.steps = c.at("steps").get<int>();
  oc.adam.step_size = c.at("step-size").get<double>();
  oc.adam.beta1 = c.at("beta1").get<double>();
  oc.adam.beta2 = c.at("beta2").get<double>();
  oc.adam.epsilon = c.at("epsilon").get<double>();
  const std::string mode = c.at("gradient-mode").get<std::string>();
  if (mode != "single-sample" && mode != "exact") throw UsageError("--gradient-mode must be single-sample or exact");
  oc.gradient_mode = mode == "exact" ? GradientMode::kExact : GradientMode::kSingleSample;
  const std::string scope = c.at("kl-scope").get<std::string>();
  if (scope != "response" && scope != "list") throw UsageError("--kl-scope must be response or list");
  oc.kl_scope = scope == "list" ? KlScope::kList : KlScope::kResponse;
  const std::string sig = c.at("dpo-sigmoid").get<std::string>();
  if (sig != "standard" && sig != "paper") throw UsageError("--dpo-sigmoid must be standard or paper");
  oc.dpo_sigmoid = sig == "paper" ? DpoSigmoid::kLiteral : DpoSigmoid::kStandard;
  oc.record_every = c.at("record-every").get<int>();
  oc.probe_size = c.at("probe-size").get<std::size_t>();
  oc.smoothing_window = c.at("smoothing-window").get<int>();
  oc.seed = seed_of(c);
  oc.oracle = ValueOracleConfig::default_for(data.spec.num_responses, Rng(oc.seed).split("oracle").seed());

  const OptimizationProblem problem{&data, &logging, model ? &*model : nullptr};
  const OptimizeResult result = optimize(method, problem, init, oc);
  run.write("trace.csv", result.trace.to_csv());
  save_theta(run.out_dir / "policy.json", result.theta);
  run.outputs.push_back("policy.json");
  const auto& last = result.trace.records.back();
  run.out << to_string(method) << ": steps=" << oc.steps << " objective=" << last.objective
          << " kl=" << last.kl << " true_value=" << last.true_value << '\n';
}

void cmd_sweep(RunContext& run) {
  const json& c = run.config;
  ExperimentOptions eo;
  try {
    eo.kind = parse_experiment_kind(c.at("kind").get<std::string>());
    eo.vary = parse_sweep_param(c.at("vary").get<std::string>());
    for (const auto& m : split_list(c.at("methods").get<std::string>())) eo.methods.push_back(parse_method(m));
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  for (const auto& v : split_list(c.at("grid").get<std::string>())) {
    try {
      eo.grid.push_back(std::stod(v));
    } catch (const std::exception&) {
      throw UsageError("--grid: cannot parse '" + v + "'");
    }
  }
  eo.config.runs = c.at("runs").get<int>();
  eo.config.num_responses = c.at("L").get<int>();
  eo.config.list_length = c.at("K").get<int>();
  eo.config.num_rounds = c.at("n").get<std::size_t>();
  eo.config.eval_scale = c.at("sigma-e").get<double>();
  eo.config.num_eval_policies = c.at("num-eval-policies").get<int>();
  eo.config.feature_noise = c.at("feature-noise").get<double>();
  eo.config.seed = seed_of(c);
  eo.parallel = c.at("parallel").get<int>();
  eo.optim.gamma = c.at("gamma").get<double>();
  eo.optim.steps = c.at("steps").get<int>();
  eo.optim.adam.step_size = c.at("step-size").get<double>();
  const std::string mode = c.at("gradient-mode").get<std::string>();
  if (mode != "single-sample" && mode != "exact") throw UsageError("--gradient-mode must be single-sample or exact");
  eo.optim.gradient_mode = mode == "exact" ? GradientMode::kExact : GradientMode::kSingleSample;
  eo.optim.record_every = 0;
  eo.optim.probe_size = 0;
  const ExperimentResult result = run_experiment(eo);
  const std::string csv = result.to_csv();
  run.write("sweep.csv", csv);
  run.out << csv;
}

void dispatch(RunContext& run) {
  if (run.command == "generate") return cmd_generate(run);
  if (run.command == "validate") return cmd_validate(run);
  if (run.command == "evaluate") return cmd_evaluate(run);
  if (run.command == "optimize") return cmd_optimize(run);
  if (run.command == "sweep") return cmd_sweep(run);
  throw UsageError("unknown command '" + run.command + "'");
}

int execute(const std::string& command, json config, std::ostream& out) {
  RunContext run{command, std::move(config), {}, {}, {}, out};
  run.out_dir = run.config.at("out").get<std::string>();
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  dispatch(run);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.write_manifest(started, seconds);
  return kExitOk;
}

// Parses `<command> [options]` into the resolved configuration.
json parse_command(const std::string& command, const std::vector<std::string>& rest, bool& help_shown,
                   std::ostream& out) {
  const Options defs = command_options(command);
  CLI::App app("rankope " + command);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with option values");
  std::map<std::string, std::string> raw;
  std::map<std::string, bool> bools;
  std::map<std::string, CLI::Option*> handles;
  for (const auto& d : defs) {
    std::string help = d.help;
    if (!d.fallback.is_boolean()) help += " [" + (d.fallback.is_string() ? d.fallback.get<std::string>() : d.fallback.dump()) + "]";
    if (d.fallback.is_boolean()) {
      handles[d.name] = app.add_flag("--" + d.name, bools[d.name], help);
    } else {
      handles[d.name] = app.add_option("--" + d.name, raw[d.name], help);
    }
  }
  std::vector<std::string> argv_rev(rest.rbegin(), rest.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    help_shown = true;
    return {};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  json file_config;
  if (!config_path.empty()) file_config = [&] {
    try {
      return json::parse(read_text(config_path));
    } catch (const json::parse_error& e) {
      throw InputError(config_path + ": malformed JSON (" + e.what() + ")");
    }
  }();
  std::map<std::string, json> flags;
  for (const auto& d : defs) {
    if (handles[d.name]->count() == 0) continue;
    flags[d.name] = d.fallback.is_boolean() ? json(bools[d.name]) : parse_value(d, raw[d.name]);
  }
  return resolve_config(defs, file_config, flags);
}

int run_manifest(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app("rankope --from-manifest");
  std::string manifest_path;
  std::string out_dir;
  app.add_option("--from-manifest", manifest_path, "manifest written by an earlier run")->required();
  app.add_option("--out", out_dir, "output directory (defaults to the manifest's)");
  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw InputError(manifest_path + ": malformed JSON (" + e.what() + ")");
  }
  if (!manifest.contains("command") || !manifest.contains("config")) {
    throw InputError(manifest_path + ": not a manifest (needs 'command' and 'config')");
  }
  const std::string command = manifest.at("command").get<std::string>();
  const Options defs = command_options(command);
  json config = resolve_config(defs, manifest.at("config"), {});
  // The manifest pins the seed; the environment must not change a replay.
  config["seed"] = manifest.at("config").value("seed", config["seed"]);
  if (!out_dir.empty()) config["out"] = out_dir;
  return execute(command, std::move(config), out);
}

const char* kUsage =
    "usage: rankope <generate|validate|evaluate|optimize|sweep> [options]\n"
    "       rankope --from-manifest <manifest.json> [--out <dir>]\n"
    "run 'rankope <command> --help' for the options of a command\n";

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.empty()) {
      err << kUsage;
      return kExitUsage;
    }
    if (args[0] == "--help" || args[0] == "-h") {
      out << kUsage;
      return kExitOk;
    }
    if (args[0] == "--version") {
      out << "rankope " << kVersion << '\n';
      return kExitOk;
    }
    if (std::find(args.begin(), args.end(), "--from-manifest") != args.end()) {
      return run_manifest(args, out);
    }
    const std::string command = args[0];
    bool help_shown = false;
    json config = parse_command(command, {args.begin() + 1, args.end()}, help_shown, out);
    if (help_shown) return kExitOk;
    return execute(command, std::move(config), out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const UnsupportedSizeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "error: optimization diverged at step " << e.step() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << " (gradient norm " << e.grad_norm() << ")\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace rankope::cli
