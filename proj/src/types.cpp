#include "rankope/types.hpp"

#include <sstream>

#include <algorithm>
#include <cmath>
#include <string>

#include "rankope/error.hpp"
#include "rankope/plackett_luce.hpp"

namespace rankope {

FeatureTable::FeatureTable(int num_responses, int dim, std::vector<Eigen::MatrixXd> per_query)
    : num_responses_(num_responses), dim_(dim), per_query_(std::move(per_query)) {
  if (num_responses <= 0 || dim <= 0) {
    throw InputError("feature table needs positive L and d");
  }
  for (std::size_t q = 0; q < per_query_.size(); ++q) {
    const auto& m = per_query_[q];
    if (m.rows() != num_responses || m.cols() != dim) {
      throw InputError("feature matrix of query " + std::to_string(q) + " is " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(num_responses) + "x" +
                       std::to_string(dim));
    }
  }
}

const Eigen::MatrixXd& FeatureTable::matrix(QueryIndex q) const {
  if (q >= per_query_.size()) {
    throw InputError("unknown query " + std::to_string(q));
  }
  return per_query_[q];
}

Eigen::VectorXd FeatureTable::phi(QueryIndex q, Response a) const {
  if (a < 1 || a > num_responses_) {
    throw InputError("response " + std::to_string(a) + " outside [1, " +
                     std::to_string(num_responses_) + "]");
  }
  return matrix(q).row(a - 1).transpose();
}

void ProblemSpec::validate() const {
  if (num_responses <= 0) throw InputError("L must be positive");
  if (list_length < 1 || list_length > num_responses) {
    throw InputError("K must satisfy 1 <= K <= L (K=" + std::to_string(list_length) +
                     ", L=" + std::to_string(num_responses) + ")");
  }
  if (!features) throw InputError("problem has no feature table");
  if (features->num_responses() != num_responses) {
    throw InputError("feature table covers " + std::to_string(features->num_responses()) +
                     " responses but L=" + std::to_string(num_responses));
  }
  for (QueryIndex q : query_ids) {
    if (q >= features->num_queries()) {
      throw InputError("query " + std::to_string(q) + " has no features");
    }
  }
  if (true_reward_param && true_reward_param->size() != features->dim()) {
    throw InputError("true reward parameter has length " +
                     std::to_string(true_reward_param->size()) + ", expected d=" +
                     std::to_string(features->dim()));
  }
}

RankedList::RankedList(std::vector<Response> entries, int num_responses)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw InputError("ranked list is empty");
  std::vector<bool> seen(num_responses + 1, false);
  for (Response a : entries_) {
    if (a < 1 || a > num_responses) {
      throw InputError("response index " + std::to_string(a) + " out of range [1, " +
                       std::to_string(num_responses) + "]");
    }
    if (seen[a]) throw InputError("duplicate response " + std::to_string(a) + " in list");
    seen[a] = true;
  }
}

bool RankedList::contains(Response a) const {
  return std::find(entries_.begin(), entries_.end(), a) != entries_.end();
}

ResponseSet::ResponseSet(std::vector<Response> members, int num_responses)
    : members_(RankedList(std::move(members), num_responses).entries()) {
  std::sort(members_.begin(), members_.end());
}

ResponseSet::ResponseSet(const RankedList& list) : members_(list.entries()) {
  std::sort(members_.begin(), members_.end());
}

bool ResponseSet::contains(Response a) const {
  return std::binary_search(members_.begin(), members_.end(), a);
}

HumanRanking::HumanRanking(std::vector<Response> entries, const RankedList& logged)
    : entries_(std::move(entries)) {
  std::vector<Response> a = entries_;
  std::vector<Response> b = logged.entries();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw InputError("human ranking is not a permutation of the logged list");
}

bool LoggedDataset::has_list_propensities() const {
  return !interactions.empty() &&
         std::all_of(interactions.begin(), interactions.end(),
                     [](const auto& it) { return it.list_propensity.has_value(); });
}

bool LoggedDataset::has_set_propensities() const {
  return !interactions.empty() &&
         std::all_of(interactions.begin(), interactions.end(),
                     [](const auto& it) { return it.set_propensity.has_value(); });
}

void LoggedDataset::validate() const {
  spec.validate();
  const auto k = static_cast<std::size_t>(spec.list_length);
  for (std::size_t t = 0; t < interactions.size(); ++t) {
    const auto& it = interactions[t];
    const std::string where = "interaction " + std::to_string(t) + ": ";
    if (!spec.features || it.query >= spec.features->num_queries()) {
      throw InputError(where + "query " + std::to_string(it.query) + " has no features");
    }
    if (it.list.size() != k) {
      throw InputError(where + "list length " + std::to_string(it.list.size()) +
                       " does not match K=" + std::to_string(k));
    }
    if (it.human.size() != k) {
      throw InputError(where + "human ranking length does not match K");
    }
    for (const auto& [name, p] : {std::pair{"list_propensity", it.list_propensity},
                                  std::pair{"set_propensity", it.set_propensity}}) {
      if (p && !(*p > 0.0 && *p <= 1.0)) {
        std::ostringstream msg;
        msg << where << name << ' ' << *p << " outside (0, 1]";
        throw InputError(msg.str());
      }
    }
    if (it.list_propensity && it.set_propensity &&
        *it.set_propensity < *it.list_propensity * (1.0 - 1e-9)) {
      throw InputError(where + "set_propensity is smaller than list_propensity");
    }
  }
}

PolicyTable::PolicyTable(std::vector<Eigen::VectorXd> probs) : probs_(std::move(probs)) {
  for (std::size_t q = 0; q < probs_.size(); ++q) {
    const auto& p = probs_[q];
    if (p.size() == 0 || (p.array() <= 0.0).any() || !p.allFinite()) {
      throw InputError("policy table row " + std::to_string(q) +
                       " must hold strictly positive probabilities");
    }
    if (std::abs(p.sum() - 1.0) > 1e-6) {
      throw InputError("policy table row " + std::to_string(q) + " sums to " +
                       std::to_string(p.sum()));
    }
  }
}

PolicyTable PolicyTable::softmax(const FeatureTable& features, const Eigen::VectorXd& theta) {
  if (theta.size() != features.dim()) {
    throw InputError("policy parameter has length " + std::to_string(theta.size()) +
                     ", expected d=" + std::to_string(features.dim()));
  }
  std::vector<Eigen::VectorXd> probs;
  probs.reserve(features.num_queries());
  for (QueryIndex q = 0; q < features.num_queries(); ++q) {
    probs.push_back(rankope::softmax(features.matrix(q) * theta));
  }
  PolicyTable out;
  out.probs_ = std::move(probs);
  return out;
}

PolicyTable PolicyTable::mixture(const PolicyTable& a, const PolicyTable& b, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("mixture weight must lie in [0, 1]");
  if (a.num_queries() != b.num_queries()) {
    throw InputError("mixture components cover different numbers of queries");
  }
  std::vector<Eigen::VectorXd> probs;
  probs.reserve(a.num_queries());
  for (QueryIndex q = 0; q < a.num_queries(); ++q) {
    if (a.probs(q).size() != b.probs(q).size()) {
      throw InputError("mixture components disagree on L");
    }
    probs.push_back((1.0 - alpha) * a.probs(q) + alpha * b.probs(q));
  }
  return PolicyTable(std::move(probs));
}

const Eigen::VectorXd& PolicyTable::probs(QueryIndex q) const {
  if (q >= probs_.size()) throw InputError("policy has no distribution for query " +
                                           std::to_string(q));
  return probs_[q];
}

}  // namespace rankope
