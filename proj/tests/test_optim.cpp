#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "rankope/error.hpp"
#include "rankope/optim.hpp"
#include "rankope/plackett_luce.hpp"
#include "rankope/reward.hpp"
#include "rankope/synth.hpp"
#include "support.hpp"

using namespace rankope;

namespace {

struct Setup {
  SynthProblem problem;
  PolicyTable logging;
  LoggedDataset data;
  RewardModel model;
};

Setup make_setup(int L, int K, std::size_t n, std::uint64_t seed) {
  SynthProblem p = fixture::small_problem(L, K, n, seed);
  PolicyTable logging = PolicyTable::softmax(*p.spec.features, p.logging_theta);
  Rng rng(seed + 1);
  LoggedDataset data = simulate_logs(p.spec, logging, rng);
  Rng wr(seed + 2);
  RewardModel model(fixture::random_vector(16, wr, 1.0), p.spec.features);
  return {std::move(p), std::move(logging), std::move(data), std::move(model)};
}

OptimizationProblem problem_of(const Setup& s) { return {&s.data, &s.logging, &s.model}; }

double tv(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

}  // namespace

TEST_CASE("method names") {
  for (auto m : {Method::kDM, Method::kIPS, Method::kDR, Method::kSetValue, Method::kSetIPS,
                 Method::kSetDR, Method::kRLHF, Method::kDPO}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("ppo"), InputError);
  CHECK(method_needs_model(Method::kRLHF));
  CHECK_FALSE(method_needs_model(Method::kDPO));
  CHECK_FALSE(method_needs_model(Method::kSetIPS));
}

TEST_CASE("kl values") {
  CHECK(kl_response(Eigen::Vector2d(0.75, 0.25), Eigen::Vector2d(0.5, 0.5)) ==
        doctest::Approx(0.75 * std::log(1.5) + 0.25 * std::log(0.5)).epsilon(1e-15));
  const Setup s = make_setup(6, 3, 4, 1);
  const Eigen::VectorXd& q = s.logging.probs(2);
  CHECK(kl_response(q, q) == 0.0);
  CHECK(kl_list(q, q, 3) == 0.0);

  Rng rng(2);
  const Eigen::VectorXd theta = fixture::random_vector(16, rng);
  const Eigen::VectorXd p = softmax(s.problem.spec.features->matrix(2) * theta);
  oracle::HP want = 0;
  const auto ph = oracle::to_hp(p);
  const auto qh = oracle::to_hp(q);
  for (std::size_t a = 0; a < ph.size(); ++a) want += ph[a] * boost::multiprecision::log(ph[a] / qh[a]);
  CHECK(kl_response(p, q) == doctest::Approx(static_cast<double>(want)).epsilon(1e-13));

  oracle::HP want_list = 0;
  oracle::for_each_list(6, 3, [&](const std::vector<Response>& A) {
    const oracle::HP a = oracle::list_prob(ph, A);
    want_list += a * boost::multiprecision::log(a / oracle::list_prob(qh, A));
  });
  CHECK(kl_list(p, q, 3) == doctest::Approx(static_cast<double>(want_list)).epsilon(1e-12));

  const OptimizationProblem prob = problem_of(s);
  CHECK(mean_kl(prob, s.problem.logging_theta, KlScope::kResponse) == doctest::Approx(0.0));
  CHECK(mean_kl(prob, theta, KlScope::kResponse) > 0.0);
}

TEST_CASE("kl sample terms average to the kl gradient") {
  const Setup s = make_setup(3, 2, 1, 3);
  const FeatureTable& f = *s.problem.spec.features;
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd theta = fixture::random_vector(16, rng);
    const Eigen::VectorXd p = softmax(f.matrix(0) * theta);
    const Eigen::VectorXd& q = s.logging.probs(0);

    Eigen::VectorXd avg = Eigen::VectorXd::Zero(16);
    for (Response a = 1; a <= 3; ++a) {
      const std::vector<Response> one = {a};
      avg += p[a - 1] * kl_grad_sample_term(f, 0, theta, q, one);
    }
    const Eigen::VectorXd fd = fixture::fd_gradient(
        [&](const Eigen::VectorXd& t) { return kl_response(softmax(f.matrix(0) * t), q); }, theta);
    CHECK(fixture::rel_err(avg, fd) < 1e-5);
    CHECK(fixture::rel_err(kl_grad(f, 0, theta, q, KlScope::kResponse, 2), fd) < 1e-5);

    Eigen::VectorXd avg_list = Eigen::VectorXd::Zero(16);
    for_each_list(3, 2, [&](const std::vector<Response>& A) {
      avg_list += list_prob(p, A) * kl_grad_sample_term(f, 0, theta, q, A);
    });
    const Eigen::VectorXd fd_list = fixture::fd_gradient(
        [&](const Eigen::VectorXd& t) { return kl_list(softmax(f.matrix(0) * t), q, 2); }, theta);
    CHECK(fixture::rel_err(avg_list, fd_list) < 1e-5);
    CHECK(fixture::rel_err(kl_grad(f, 0, theta, q, KlScope::kList, 2), fd_list) < 1e-5);
  }

  // at pi = pi_0 every term is grad log pi, which averages to zero
  const Eigen::VectorXd theta0 = s.problem.logging_theta;
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(16);
  const Eigen::VectorXd& q = s.logging.probs(0);
  for (Response a = 1; a <= 3; ++a) {
    const std::vector<Response> one = {a};
    avg += q[a - 1] * kl_grad_sample_term(f, 0, theta0, q, one);
  }
  CHECK(avg.lpNorm<Eigen::Infinity>() < 1e-12);

  // sampled mean within 3 standard errors per coordinate
  const Eigen::VectorXd theta = fixture::random_vector(16, rng, 0.5);
  const Eigen::VectorXd exact = kl_grad(f, 0, theta, q, KlScope::kResponse, 2);
  const int m = 100000;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(16);
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(16);
  Rng draws(5);
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd g = kl_grad_single_sample(f, 0, theta, q, KlScope::kResponse, 2, draws);
    s1 += g;
    s2 += g.cwiseAbs2();
  }
  const Eigen::VectorXd mean = s1 / m;
  const Eigen::VectorXd se = ((s2 / m - mean.cwiseAbs2()) / m).cwiseSqrt();
  int outside = 0;
  for (int j = 0; j < 16; ++j) outside += std::abs(mean[j] - exact[j]) > 3 * se[j] + 1e-12;
  CHECK(outside <= 1);
}

TEST_CASE("estimator gradients match finite differences") {
  for (int K : {2, 3}) {
    const Setup s = make_setup(5, K, 6, 10 + K);
    EvaluationContext ctx;
    ctx.data = &s.data;
    ctx.logging = &s.logging;
    ctx.model = &s.model;
    const FeatureTable& f = *s.problem.spec.features;
    Rng rng(20 + K);
    for (auto kind : {EstimatorKind::kDM, EstimatorKind::kIPS, EstimatorKind::kDR,
                      EstimatorKind::kSetValue, EstimatorKind::kSetIPS, EstimatorKind::kSetDR}) {
      for (int trial = 0; trial < 10; ++trial) {
        CAPTURE(K);
        CAPTURE(to_string(kind));
        CAPTURE(trial);
        const Eigen::VectorXd theta = fixture::random_vector(16, rng, 0.7);
        const Eigen::VectorXd g = value_grad(kind, ctx, theta, GradientMode::kExact);
        const Eigen::VectorXd fd = fixture::fd_gradient(
            [&](const Eigen::VectorXd& t) {
              return estimate(kind, ctx, PolicyTable::softmax(f, t)).value;
            },
            theta);
        CHECK(fixture::rel_err(g, fd) < 1e-5);
      }
    }
  }
}

TEST_CASE("objective gradients match finite differences") {
  const Setup s = make_setup(5, 2, 8, 30);
  const OptimizationProblem prob = problem_of(s);
  Rng rng(31);
  for (auto scope : {KlScope::kResponse, KlScope::kList}) {
    for (auto m : {Method::kDM, Method::kIPS, Method::kDR, Method::kSetValue, Method::kSetIPS,
                   Method::kSetDR, Method::kRLHF, Method::kDPO}) {
      for (auto sig : {DpoSigmoid::kStandard, DpoSigmoid::kLiteral}) {
        if (m != Method::kDPO && sig == DpoSigmoid::kLiteral) continue;
        OptimConfig c;
        c.gamma = 0.3;
        c.kl_scope = scope;
        c.dpo_sigmoid = sig;
        for (int trial = 0; trial < 10; ++trial) {
          CAPTURE(to_string(m));
          CAPTURE(trial);
          const Eigen::VectorXd theta = fixture::random_vector(16, rng, 0.7);
          const Eigen::VectorXd g = objective_grad(m, prob, theta, c, GradientMode::kExact);
          const Eigen::VectorXd fd = fixture::fd_gradient(
              [&](const Eigen::VectorXd& t) { return objective(m, prob, t, c); }, theta);
          CHECK(fixture::rel_err(g, fd) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("single-sample gradients are unbiased") {
  const Setup s = make_setup(4, 2, 3, 40);
  const FeatureTable& f = *s.problem.spec.features;
  EvaluationContext ctx;
  ctx.data = &s.data;
  ctx.logging = &s.logging;
  ctx.model = &s.model;
  Rng rng(41);
  const Eigen::VectorXd theta = fixture::random_vector(16, rng);
  const Eigen::VectorXd exact = value_grad(EstimatorKind::kDM, ctx, theta, GradientMode::kExact);

  Eigen::VectorXd avg = Eigen::VectorXd::Zero(16);
  for (QueryIndex x : s.data.spec.query_ids) {
    const Eigen::VectorXd p = softmax(f.matrix(x) * theta);
    for_each_list(4, 2, [&](const std::vector<Response>& A) {
      avg += list_prob(p, A) * dm_grad_sample_term(f, x, theta, s.model, A);
    });
  }
  avg /= static_cast<double>(s.data.size());
  CHECK((avg - exact).lpNorm<Eigen::Infinity>() < 1e-10);

  // the full single-sample objective gradient averages to the exact one
  const OptimizationProblem prob = problem_of(s);
  OptimConfig c;
  c.gamma = 0.5;
  const Eigen::VectorXd want = objective_grad(Method::kDR, prob, theta, c, GradientMode::kExact);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(16);
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(16);
  const int m = 40000;
  Rng draws(42);
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd g = objective_grad(Method::kDR, prob, theta, c, GradientMode::kSingleSample, &draws);
    s1 += g;
    s2 += g.cwiseAbs2();
  }
  const Eigen::VectorXd mean = s1 / m;
  const Eigen::VectorXd se = ((s2 / m - mean.cwiseAbs2()) / m).cwiseSqrt();
  int outside = 0;
  for (int j = 0; j < 16; ++j) outside += std::abs(mean[j] - want[j]) > 3 * se[j] + 1e-12;
  CHECK(outside <= 1);

  // a constant model has no direct-method gradient
  const RewardModel zero(Eigen::VectorXd::Zero(16), s.problem.spec.features);
  ctx.model = &zero;
  CHECK(value_grad(EstimatorKind::kDM, ctx, theta, GradientMode::kExact).lpNorm<Eigen::Infinity>() <
        1e-15);
}

TEST_CASE("dpo at the reference policy") {
  const Setup s = make_setup(6, 3, 50, 50);
  const OptimizationProblem prob = problem_of(s);
  CHECK(dpo_objective(prob, s.problem.logging_theta, 0.1) ==
        doctest::Approx(-50.0 * std::log(2.0)).epsilon(1e-13));
  CHECK(dpo_objective(prob, s.problem.logging_theta, 0.1, DpoSigmoid::kLiteral) ==
        doctest::Approx(-50.0 * std::log(2.0)).epsilon(1e-13));
  // moving toward the preferred response raises the standard objective
  const Eigen::VectorXd g = dpo_grad(prob, s.problem.logging_theta, 1.0);
  CHECK(dpo_objective(prob, s.problem.logging_theta + 1e-3 * g, 1.0) > -50.0 * std::log(2.0));
}

TEST_CASE("large gamma keeps the policy at the logging policy") {
  const Setup s = make_setup(7, 2, 40, 60);
  const OptimizationProblem prob = problem_of(s);
  OptimConfig c;
  c.gamma = 1e6;
  c.steps = 1500;
  c.record_every = 0;
  c.probe_size = 0;
  c.gradient_mode = GradientMode::kExact;
  Rng rng(61);
  const Eigen::VectorXd init = s.problem.logging_theta + fixture::random_vector(16, rng, 1.0);
  auto worst_tv = [&](const Eigen::VectorXd& theta) {
    double worst = 0;
    for (QueryIndex x : s.data.spec.query_ids) {
      worst = std::max(worst, tv(softmax(s.problem.spec.features->matrix(x) * theta), s.logging.probs(x)));
    }
    return worst;
  };
  for (auto m : {Method::kDM, Method::kSetDR, Method::kRLHF}) {
    CAPTURE(to_string(m));
    CHECK(worst_tv(optimize(m, prob, init, c).theta) < 0.01);
  }
  // sampled KL gradients leave Adam a noise floor set by the step size
  c.gradient_mode = GradientMode::kSingleSample;
  CHECK(worst_tv(optimize(Method::kDM, prob, init, c).theta) < 0.1);
}

TEST_CASE("exact ascent without regularization does not decrease the objective") {
  Setup s = make_setup(5, 2, 30, 70);
  const RewardModel perfect(*s.problem.spec.true_reward_param, s.problem.spec.features);
  const OptimizationProblem prob{&s.data, &s.logging, &perfect};
  OptimConfig c;
  c.gamma = 0.0;
  c.steps = 500;
  c.adam.step_size = 1e-3;
  c.gradient_mode = GradientMode::kExact;
  c.record_every = 1;
  c.probe_size = 0;
  const auto r = optimize(Method::kDM, prob, s.problem.logging_theta, c);
  REQUIRE(r.trace.records.size() == 501);
  int drops = 0;
  for (std::size_t i = 1; i < r.trace.records.size(); ++i) {
    drops += r.trace.records[i].objective < r.trace.records[i - 1].objective - 1e-14;
  }
  CHECK(drops == 0);
  CHECK(r.trace.records.back().objective > r.trace.records.front().objective);
  // with the perfect model the DM objective is the true value
  CHECK(r.trace.records.back().true_value ==
        doctest::Approx(r.trace.records.back().objective).epsilon(1e-12));
}

TEST_CASE("trace bookkeeping") {
  const Setup s = make_setup(5, 2, 60, 80);
  const OptimizationProblem prob = problem_of(s);
  OptimConfig c;
  c.steps = 0;
  auto r = optimize(Method::kIPS, prob, s.problem.logging_theta, c);
  REQUIRE(r.trace.records.size() == 1);
  CHECK(r.theta == s.problem.logging_theta);
  CHECK(r.trace.records[0].kl == doctest::Approx(0.0));
  CHECK(r.trace.records[0].smoothed_value == r.trace.records[0].raw_value);

  c.steps = 25;
  c.record_every = 10;
  c.smoothing_window = 15;
  c.probe_size = 100;
  r = optimize(Method::kSetIPS, prob, s.problem.logging_theta, c);
  REQUIRE(r.trace.records.size() == 4);
  CHECK(r.trace.records[3].step == 25);
  const auto& q = r.trace.records;
  CHECK(q[2].smoothed_value == doctest::Approx((q[1].raw_value + q[2].raw_value) / 2));
  CHECK(q[3].smoothed_value == doctest::Approx((q[2].raw_value + q[3].raw_value) / 2));
  for (const auto& rec : q) {
    CHECK(rec.kl >= 0.0);
    CHECK(std::isfinite(rec.true_value));
  }
  const std::string csv = r.trace.to_csv();
  CHECK(csv.rfind("step,raw_value,smoothed_value,true_value,kl,objective,method\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  // the same seed reproduces the run bit for bit
  const auto again = optimize(Method::kSetIPS, prob, s.problem.logging_theta, c);
  CHECK(again.theta == r.theta);
  CHECK(again.trace.to_csv() == csv);
}

TEST_CASE("divergence and input errors") {
  const Setup s = make_setup(5, 2, 20, 90);
  const OptimizationProblem prob = problem_of(s);
  OptimConfig c;
  c.steps = 50;
  c.adam.step_size = 1e307;
  c.probe_size = 0;
  try {
    optimize(Method::kDM, prob, s.problem.logging_theta, c);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() < 50);
  }
  OptimConfig ok;
  CHECK_THROWS_AS(optimize(Method::kDM, prob, Eigen::VectorXd::Zero(3), ok), InputError);
  const OptimizationProblem no_model{&s.data, &s.logging, nullptr};
  CHECK_THROWS_AS(optimize(Method::kRLHF, no_model, s.problem.logging_theta, ok), InputError);
}
