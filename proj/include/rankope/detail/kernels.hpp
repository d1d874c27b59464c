#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "rankope/detail/dual.hpp"
#include "rankope/types.hpp"

namespace rankope::detail {

// Mass of the responses outside `members`, summed directly rather than as a
// complement.
inline double outside_mass(const Eigen::VectorXd& probs, std::span<const Response> members) {
  double outside = 0.0;
  if (members.size() <= 16) {
    for (Eigen::Index a = 0; a < probs.size(); ++a) {
      const bool in = std::find(members.begin(), members.end(), static_cast<Response>(a + 1)) !=
                      members.end();
      if (!in) outside += probs[a];
    }
    return outside;
  }
  std::vector<bool> in(static_cast<std::size_t>(probs.size()), false);
  for (Response m : members) in[m - 1] = true;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    if (!in[a]) outside += probs[a];
  }
  return outside;
}

// Plackett-Luce list probability from the probabilities of the list members
// (in list order) and the total mass of all responses outside the list. The
// stage-i denominator is outside + sum_{j >= i} member[j], which equals the
// complement 1 - sum_{j < i} member[j] without the cancellation.
template <class T>
T list_prob_kernel(std::span<const T> member, const T& outside) {
  const std::size_t k = member.size();
  std::array<T, 64> small;
  std::vector<T> large;
  T* suffix = small.data();
  if (k + 1 > small.size()) {
    large.resize(k + 1);
    suffix = large.data();
  }
  suffix[k] = outside;
  for (std::size_t i = k; i-- > 0;) suffix[i] = suffix[i + 1] + member[i];
  T prob(1.0);
  for (std::size_t i = 0; i < k; ++i) prob *= member[i] / suffix[i];
  return prob;
}

template <class T>
struct FirstChoice {
  std::array<T, kMaxSetSize> joint{};  // P(first = member i, drawn set = S)
  T set_prob{};                        // nu(S) = sum_i joint[i]
};

// Dynamic program over prefix subsets of S. h(V) is the probability that,
// with V already drawn, the remaining draws are exactly S \ V in some order:
//   h(S) = 1,  h(V) = sum_{i not in V} member[i] / R(V) * h(V + i),
// where R(V) = outside + sum_{i not in V} member[i]. Summing list probabilities
// over all |S|! orderings gives the same number; this costs 2^K * K.
template <class T>
FirstChoice<T> first_choice_kernel(std::span<const T> member, const T& outside) {
  const int k = static_cast<int>(member.size());
  const unsigned full = (1u << k) - 1u;
  std::array<T, (1u << kMaxSetSize)> h;
  h[full] = T(1.0);
  for (int mask = static_cast<int>(full) - 1; mask >= 0; --mask) {
    T rest = outside;
    T acc(0.0);
    for (int i = 0; i < k; ++i) {
      if (mask & (1 << i)) continue;
      rest += member[i];
      acc += member[i] * h[mask | (1 << i)];
    }
    h[mask] = acc / rest;
  }
  FirstChoice<T> out;
  T total = outside;
  for (int i = 0; i < k; ++i) total += member[i];
  for (int i = 0; i < k; ++i) out.joint[i] = member[i] / total * h[1u << i];
  out.set_prob = h[0];
  return out;
}

}  // namespace rankope::detail
