#pragma once

// Gradient pieces with respect to one query's response probabilities. Callers
// accumulate them per query and apply chain_softmax once.

#include <Eigen/Core>
#include <span>

#include "rankope/optim.hpp"
#include "rankope/rng.hpp"
#include "rankope/types.hpp"

namespace rankope::detail {

// Given g = dF/dp over responses, returns dF/dtheta = Phi^T (p * (g - p^T g)).
Eigen::VectorXd chain_softmax(const Eigen::MatrixXd& phi, const Eigen::VectorXd& p,
                              const Eigen::VectorXd& g);

// log pi(list) and d log pi(list) / dp scattered over all responses.
double log_list_prob_with_grad(const Eigen::VectorXd& probs, std::span<const Response> list,
                               Eigen::VectorXd& grad_probs);

// Adds dKL/dp at probs, exactly.
void add_kl_grad_probs(const Eigen::VectorXd& probs, const Eigen::VectorXd& logging_probs,
                       KlScope scope, int list_length, Eigen::VectorXd& grad_probs);

// Adds d log pi(sample)/dp * (1 + log pi(sample) - log pi0(sample)).
void add_kl_sample_grad_probs(const Eigen::VectorXd& probs, const Eigen::VectorXd& logging_probs,
                              std::span<const Response> sample, Eigen::VectorXd& grad_probs);

}  // namespace rankope::detail
