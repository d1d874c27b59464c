#include "rankope/stats.hpp"

#include <algorithm>
#include <cmath>

#include "rankope/error.hpp"

namespace rankope {

double binomial_upper_tail(int k, int n, double p) {
  if (n < 0 || p < 0.0 || p > 1.0) throw InputError("invalid binomial parameters");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p == 1.0) return 1.0;
  double tail = 0.0;
  for (int i = k; i <= n; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                            std::lgamma(n - i + 1.0) + i * std::log(p) +
                            (n - i) * std::log1p(-p);
    tail += std::exp(log_term);
  }
  return std::min(tail, 1.0);
}

SignTest paired_sign_test(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size()) throw InputError("sign test needs paired samples");
  SignTest out;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (after[i] < before[i]) {
      ++out.improved;
    } else if (after[i] > before[i]) {
      ++out.worsened;
    } else {
      ++out.ties;
    }
  }
  out.p_value = binomial_upper_tail(out.improved, out.improved + out.worsened);
  return out;
}

}  // namespace rankope
