#pragma once

// Independent reference computations for tests: plain high-precision
// arithmetic over explicit enumerations, sharing no code with the library's
// kernels.

#include <Eigen/Core>
#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <functional>
#include <numeric>
#include <vector>

#include "rankope/estimators.hpp"
#include "rankope/optim.hpp"
#include "rankope/plackett_luce.hpp"
#include "rankope/rng.hpp"
#include "rankope/synth.hpp"
#include "rankope/types.hpp"

namespace oracle {

using HP = boost::multiprecision::cpp_bin_float_50;
using rankope::Response;

inline std::vector<HP> softmax(const Eigen::VectorXd& scores) {
  std::vector<HP> e(scores.size());
  HP total = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    e[i] = boost::multiprecision::exp(HP(scores[i]));
    total += e[i];
  }
  for (auto& v : e) v /= total;
  return e;
}

inline std::vector<HP> to_hp(const Eigen::VectorXd& p) {
  return std::vector<HP>(p.data(), p.data() + p.size());
}

// Stage-by-stage renormalization over the responses still available.
inline HP list_prob(const std::vector<HP>& p, const std::vector<Response>& list) {
  std::vector<bool> used(p.size(), false);
  HP prob = 1;
  for (Response a : list) {
    HP remaining = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!used[j]) remaining += p[j];
    }
    prob *= p[a - 1] / remaining;
    used[a - 1] = true;
  }
  return prob;
}

// Sum of list probabilities over every ordering of the set.
inline HP set_prob(const std::vector<HP>& p, std::vector<Response> set) {
  std::sort(set.begin(), set.end());
  HP total = 0;
  do {
    total += list_prob(p, set);
  } while (std::next_permutation(set.begin(), set.end()));
  return total;
}

// Probability that `a` is ranked first among `members` by PL feedback with
// stage weights exp(scores).
inline HP top_prob(const Eigen::VectorXd& scores, const std::vector<Response>& members,
                   Response a) {
  HP total = 0;
  for (Response m : members) total += boost::multiprecision::exp(HP(scores[m - 1]));
  return boost::multiprecision::exp(HP(scores[a - 1])) / total;
}

inline void for_each_list(int L, int K, const std::function<void(const std::vector<Response>&)>& f) {
  std::vector<Response> all(L);
  std::iota(all.begin(), all.end(), 1);
  // every K-permutation: choose by bitmask, then permute
  for (unsigned mask = 0; mask < (1u << L); ++mask) {
    if (__builtin_popcount(mask) != K) continue;
    std::vector<Response> s;
    for (int i = 0; i < L; ++i) {
      if (mask & (1u << i)) s.push_back(i + 1);
    }
    do {
      f(s);
    } while (std::next_permutation(s.begin(), s.end()));
  }
}

// V(pi) at one query by enumerating lists and applying the true top-choice
// probability of the first entry.
inline HP true_value_at(const Eigen::VectorXd& policy_scores, const Eigen::VectorXd& reward_scores,
                        int K) {
  const auto p = softmax(policy_scores);
  HP v = 0;
  for_each_list(static_cast<int>(p.size()), K, [&](const std::vector<Response>& A) {
    v += list_prob(p, A) * top_prob(reward_scores, A, A[0]);
  });
  return v;
}

}  // namespace oracle

namespace fixture {

using namespace rankope;

// Small synthetic world with arbitrary L, K and queries.
inline SynthProblem small_problem(int L, int K, std::size_t queries, std::uint64_t seed,
                                  double reward_scale = 2.0, double policy_scale = 1.0) {
  SynthConfig c;
  c.num_responses = L;
  c.list_length = K;
  c.num_rounds = queries;
  c.reward_scale = reward_scale;
  c.logging_scale = policy_scale;
  c.eval_scale = policy_scale;
  c.num_eval_policies = 3;
  Rng rng(seed);
  return generate_problem(c, rng);
}

inline Eigen::VectorXd random_vector(int d, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = scale * rng.normal();
  return v;
}

// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x;
    Eigen::VectorXd b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  const double scale = std::max(want.lpNorm<Eigen::Infinity>(), 1e-6);
  return (got - want).lpNorm<Eigen::Infinity>() / scale;
}

// E[estimate] over one logged round per query: lists from the logging policy,
// full human rankings from the true reward parameter, all enumerated and
// weighted exactly. `ctx` supplies the model, oracle and logging policy; its
// dataset pointer is replaced per enumerated round.
inline double expected_estimate(EstimatorKind kind, const ProblemSpec& spec,
                                const PolicyTable& logging, const PolicyTable& target,
                                EvaluationContext ctx) {
  const int L = spec.num_responses;
  const int K = spec.list_length;
  double total = 0.0;
  for (QueryIndex x : spec.query_ids) {
    const auto p0 = oracle::to_hp(logging.probs(x));
    const Eigen::VectorXd reward = spec.features->matrix(x) * *spec.true_reward_param;
    oracle::HP acc = 0;
    oracle::for_each_list(L, K, [&](const std::vector<Response>& A) {
      const oracle::HP pa = oracle::list_prob(p0, A);
      // full human ranking by PL stages over A
      std::vector<Response> h = A;
      std::sort(h.begin(), h.end());
      do {
        oracle::HP ph = 1;
        for (std::size_t i = 0; i < h.size(); ++i) {
          ph *= oracle::top_prob(reward, std::vector<Response>(h.begin() + i, h.end()), h[i]);
        }
        LoggedDataset one;
        one.spec = spec;
        one.spec.query_ids = {x};
        LoggedInteraction it;
        it.query = x;
        it.list = RankedList(A, L);
        it.human = HumanRanking(h, it.list);
        one.interactions.push_back(it);
        ctx.data = &one;
        const double v = kind == EstimatorKind::kOnPolicyCount ? estimate_on_policy_count(one).value
                                                               : estimate(kind, ctx, target).value;
        acc += pa * ph * v;
      } while (std::next_permutation(h.begin(), h.end()));
    });
    total += static_cast<double>(acc);
  }
  return total / static_cast<double>(spec.query_ids.size());
}

}  // namespace fixture
