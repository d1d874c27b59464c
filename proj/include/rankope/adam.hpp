#pragma once

#include <Eigen/Core>
#include <cmath>

namespace rankope {

struct AdamConfig {
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. `ascend` moves along the gradient, `descend` against it.
class Adam {
 public:
  Adam(Eigen::Index dim, AdamConfig config)
      : config_(config), m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)) {}

  void ascend(Eigen::VectorXd& x, const Eigen::VectorXd& grad) { step(x, grad, 1.0); }
  void descend(Eigen::VectorXd& x, const Eigen::VectorXd& grad) { step(x, grad, -1.0); }

  long steps_taken() const { return t_; }

 private:
  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, double sign) {
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double m_corr = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double v_corr = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    x.array() += sign * config_.step_size * (m_.array() / m_corr) /
                 ((v_.array() / v_corr).sqrt() + config_.epsilon);
  }

  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

}  // namespace rankope
