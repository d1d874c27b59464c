#include "rankope/plackett_luce.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rankope/detail/kernels.hpp"
#include "rankope/error.hpp"

namespace rankope {
namespace {

void check_response(const Eigen::VectorXd& probs, Response a) {
  if (a < 1 || a > probs.size()) {
    throw InputError("response " + std::to_string(a) + " outside [1, " +
                     std::to_string(probs.size()) + "]");
  }
}

void check_distinct(const Eigen::VectorXd& probs, std::span<const Response> list) {
  std::vector<bool> seen(probs.size() + 1, false);
  for (Response a : list) {
    check_response(probs, a);
    if (seen[a]) throw InputError("duplicate response " + std::to_string(a) + " in list");
    seen[a] = true;
  }
}

std::vector<double> member_probs(const Eigen::VectorXd& probs, std::span<const Response> members) {
  std::vector<double> out;
  out.reserve(members.size());
  for (Response a : members) out.push_back(probs[a - 1]);
  return out;
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
  const double m = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - m).exp();
  return e / e.sum();
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& scores) {
  const double m = scores.maxCoeff();
  const double lse = m + std::log((scores.array() - m).exp().sum());
  return scores.array() - lse;
}

double response_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                     Response a) {
  const Eigen::VectorXd probs = response_probs(spec, policy, x);
  check_response(probs, a);
  return probs[a - 1];
}

Eigen::VectorXd response_probs(const ProblemSpec& spec, const SoftmaxPolicy& policy,
                               QueryIndex x) {
  if (!spec.features) throw InputError("problem has no feature table");
  if (policy.theta.size() != spec.features->dim()) {
    throw InputError("policy parameter length does not match d");
  }
  return softmax(spec.features->matrix(x) * policy.theta);
}

double list_prob(const Eigen::VectorXd& probs, std::span<const Response> list) {
  if (list.empty()) throw InputError("ranked list is empty");
  check_distinct(probs, list);
  const std::vector<double> member = member_probs(probs, list);
  return detail::list_prob_kernel<double>(member, detail::outside_mass(probs, list));
}

double list_prob(const Eigen::VectorXd& probs, const RankedList& list) {
  return list_prob(probs, std::span<const Response>(list.entries()));
}

double list_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                 const RankedList& list) {
  return list_prob(response_probs(spec, policy, x), list);
}

double set_prob(const Eigen::VectorXd& probs, const ResponseSet& set) {
  require_enumerable_set(set.size());
  check_distinct(probs, set.members());
  if (static_cast<Eigen::Index>(set.size()) == probs.size()) return 1.0;
  const std::vector<double> member = member_probs(probs, set.members());
  return detail::first_choice_kernel<double>(member, detail::outside_mass(probs, set.members()))
      .set_prob;
}

double set_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                const ResponseSet& set) {
  return set_prob(response_probs(spec, policy, x), set);
}

double conditional_prob(const Eigen::VectorXd& probs, const ResponseSet& set, Response a) {
  check_distinct(probs, set.members());
  if (!set.contains(a)) {
    throw InputError("response " + std::to_string(a) + " is not in the set");
  }
  double total = 0.0;
  for (Response b : set.members()) total += probs[b - 1];
  return probs[a - 1] / total;
}

double conditional_prob(const ProblemSpec& spec, const SoftmaxPolicy& policy, QueryIndex x,
                        const ResponseSet& set, Response a) {
  return conditional_prob(response_probs(spec, policy, x), set, a);
}

std::vector<double> first_choice_joint(const Eigen::VectorXd& probs,
                                       std::span<const Response> members) {
  require_enumerable_set(members.size());
  check_distinct(probs, members);
  const std::vector<double> member = member_probs(probs, members);
  const auto fc = detail::first_choice_kernel<double>(member, detail::outside_mass(probs, members));
  return {fc.joint.begin(), fc.joint.begin() + static_cast<std::ptrdiff_t>(members.size())};
}

double first_given_set(const Eigen::VectorXd& probs, const ResponseSet& set, Response a) {
  const auto& m = set.members();
  const auto it = std::find(m.begin(), m.end(), a);
  if (it == m.end()) {
    throw InputError("response " + std::to_string(a) + " is not in the set");
  }
  const std::vector<double> joint = first_choice_joint(probs, m);
  double total = 0.0;
  for (double j : joint) total += j;
  return joint[static_cast<std::size_t>(it - m.begin())] / total;
}

RankedList sample_list(const Eigen::VectorXd& probs, int list_length, Rng& rng) {
  if (list_length < 1 || list_length > probs.size()) {
    throw InputError("list length must lie in [1, L]");
  }
  std::vector<double> weights(probs.data(), probs.data() + probs.size());
  double remaining = probs.sum();
  std::vector<Response> entries;
  entries.reserve(list_length);
  for (int i = 0; i < list_length; ++i) {
    const std::size_t pick = rng.categorical(weights, remaining);
    entries.push_back(static_cast<Response>(pick) + 1);
    weights[pick] = 0.0;
    // Re-sum rather than subtract so the remaining mass stays exact.
    remaining = 0.0;
    for (double w : weights) remaining += w;
  }
  return RankedList(std::move(entries), static_cast<int>(probs.size()));
}

HumanRanking sample_pl_ranking(const Eigen::VectorXd& scores, const RankedList& list,
                               Rng& rng) {
  const std::size_t k = list.size();
  Eigen::VectorXd member_scores(k);
  for (std::size_t i = 0; i < k; ++i) member_scores[i] = scores[list[i] - 1];
  std::vector<double> weights(k);
  const double m = member_scores.maxCoeff();
  for (std::size_t i = 0; i < k; ++i) weights[i] = std::exp(member_scores[i] - m);
  std::vector<Response> order;
  order.reserve(k);
  for (std::size_t stage = 0; stage < k; ++stage) {
    double total = 0.0;
    for (double w : weights) total += w;
    const std::size_t pick = rng.categorical(weights, total);
    order.push_back(list[pick]);
    weights[pick] = 0.0;
  }
  return HumanRanking(std::move(order), list);
}

HumanRanking sample_human_ranking(const ProblemSpec& spec, QueryIndex x,
                                  const RankedList& list, Rng& rng) {
  if (!spec.true_reward_param) {
    throw InputError("simulating feedback requires the true reward parameter");
  }
  const Eigen::VectorXd scores = spec.features->matrix(x) * *spec.true_reward_param;
  return sample_pl_ranking(scores, list, rng);
}

double num_ordered_lists(int num_responses, int list_length) {
  double count = 1.0;
  for (int i = 0; i < list_length; ++i) count *= static_cast<double>(num_responses - i);
  return count;
}

void require_enumerable_lists(int num_responses, int list_length) {
  const double count = num_ordered_lists(num_responses, list_length);
  if (count > kMaxEnumeratedLists) {
    throw UnsupportedSizeError("enumerating " + std::to_string(count) +
                               " ordered lists exceeds the cap of 1e6");
  }
}

void require_enumerable_set(std::size_t set_size) {
  if (set_size > static_cast<std::size_t>(kMaxSetSize)) {
    throw UnsupportedSizeError("set of size " + std::to_string(set_size) +
                               " exceeds the enumeration cap K <= 8");
  }
}

}  // namespace rankope
