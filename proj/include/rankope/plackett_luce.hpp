#pragma once

#include <Eigen/Core>
#include <numeric>
#include <span>
#include <vector>

#include "rankope/rng.hpp"
#include "rankope/types.hpp"

namespace rankope {

// Max-subtracted softmax and its log.
Eigen::VectorXd softmax(const Eigen::VectorXd& scores);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& scores);

/// pi(a|x; theta) for the softmax-linear policy class.
double response_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                     Response a);
Eigen::VectorXd response_probs(const ProblemSpec& spec, const SoftmaxPolicy& policy,
                               QueryIndex x);

/// Plackett-Luce probability of drawing the ranked list in order, given the
/// response distribution `probs` (length L, index a-1).
double list_prob(const Eigen::VectorXd& probs, std::span<const Response> list);
double list_prob(const Eigen::VectorXd& probs, const RankedList& list);
double list_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                 const RankedList& list);

/// nu(S|x): total probability of every ordering of S. Requires |S| <= 8.
double set_prob(const Eigen::VectorXd& probs, const ResponseSet& set);
double set_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                const ResponseSet& set);

/// pi(a|S, x) = pi(a|x) / sum_{a' in S} pi(a'|x).
double conditional_prob(const Eigen::VectorXd& probs, const ResponseSet& set, Response a);
double conditional_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                        const ResponseSet& set, Response a);

// Joint probabilities P(first draw = members[i], drawn set = members) for
// each member, in the order given.
std::vector<double> first_choice_joint(const Eigen::VectorXd& probs,
                                       std::span<const Response> members);

// P(first draw = a | drawn set = S) under sequential sampling. Differs from
// conditional_prob unless K == L or the members share one probability.
double first_given_set(const Eigen::VectorXd& probs, const ResponseSet& set, Response a);

RankedList sample_list(const Eigen::VectorXd& probs, int list_length, Rng& rng);

// Plackett-Luce permutation of `list` with stage weights exp(scores[a-1]).
HumanRanking sample_pl_ranking(const Eigen::VectorXd& scores, const RankedList& list,
                               Rng& rng);
// Human feedback under the true reward parameter and clean features.
HumanRanking sample_human_ranking(const ProblemSpec& spec, QueryIndex x,
                                  const RankedList& list, Rng& rng);

// L! / (L-K)!, as a double so overflow is not an issue.
double num_ordered_lists(int num_responses, int list_length);
void require_enumerable_lists(int num_responses, int list_length);
void require_enumerable_set(std::size_t set_size);

// Calls f(const std::vector<Response>&) for every ordered list of distinct
// responses of the given length, lexicographically.
template <class F>
void for_each_list(int num_responses, int list_length, F&& f) {
  std::vector<Response> current;
  std::vector<bool> used(num_responses + 1, false);
  auto rec = [&](auto&& self) -> void {
    if (static_cast<int>(current.size()) == list_length) {
      f(static_cast<const std::vector<Response>&>(current));
      return;
    }
    for (Response a = 1; a <= num_responses; ++a) {
      if (used[a]) continue;
      used[a] = true;
      current.push_back(a);
      self(self);
      current.pop_back();
      used[a] = false;
    }
  };
  rec(rec);
}

// Calls f(const std::vector<Response>&) for every sorted K-subset of [L].
template <class F>
void for_each_set(int num_responses, int set_size, F&& f) {
  std::vector<Response> current(set_size);
  std::iota(current.begin(), current.end(), 1);
  if (set_size > num_responses) return;
  while (true) {
    f(static_cast<const std::vector<Response>&>(current));
    int i = set_size - 1;
    while (i >= 0 && current[i] == num_responses - set_size + i + 1) --i;
    if (i < 0) return;
    ++current[i];
    for (int j = i + 1; j < set_size; ++j) current[j] = current[j - 1] + 1;
  }
}

}  // namespace rankope
