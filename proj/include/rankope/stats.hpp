#pragma once

#include <span>

namespace rankope {

// P(X >= k) for X ~ Binomial(n, p).
double binomial_upper_tail(int k, int n, double p = 0.5);

struct SignTest {
  int improved = 0;  // pairs with after < before
  int worsened = 0;
  int ties = 0;
  double p_value = 1.0;  // one-sided, ties dropped
};

// One-sided paired sign test of `after` being smaller than `before`.
SignTest paired_sign_test(std::span<const double> before, std::span<const double> after);

}  // namespace rankope
