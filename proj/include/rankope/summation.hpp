#pragma once

#include <cmath>
#include <span>

namespace rankope {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean and standard error (sample std with n-1 over sqrt(n)).
inline MeanAndError mean_and_error(std::span<const double> xs) {
  MeanAndError out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  out.mean = compensated_sum(xs) / n;
  if (xs.size() < 2) return out;
  CompensatedSum ss;
  for (double x : xs) ss.add((x - out.mean) * (x - out.mean));
  out.std_error = std::sqrt(ss.value() / (n - 1.0)) / std::sqrt(n);
  return out;
}

}  // namespace rankope
