#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace rankope {

// Responses are 1-based indices into [L].
using Response = int;
// Row of the feature table a round's query refers to.
using QueryIndex = std::size_t;

inline constexpr int kMaxSetSize = 8;
inline constexpr double kMaxEnumeratedLists = 1e6;

/// Dense feature map: one L x d matrix per query, row a-1 holding phi(x, a).
class FeatureTable {
 public:
  FeatureTable(int num_responses, int dim, std::vector<Eigen::MatrixXd> per_query);

  std::size_t num_queries() const { return per_query_.size(); }
  int num_responses() const { return num_responses_; }
  int dim() const { return dim_; }

  const Eigen::MatrixXd& matrix(QueryIndex q) const;
  Eigen::VectorXd phi(QueryIndex q, Response a) const;

 private:
  int num_responses_;
  int dim_;
  std::vector<Eigen::MatrixXd> per_query_;
};

using FeatureTablePtr = std::shared_ptr<const FeatureTable>;

struct ProblemSpec {
  int num_responses = 0;
  int list_length = 0;
  std::vector<QueryIndex> query_ids;  // one entry per round
  FeatureTablePtr features;
  std::optional<Eigen::VectorXd> true_reward_param;

  std::size_t num_rounds() const { return query_ids.size(); }
  int feature_dim() const { return features ? features->dim() : 0; }

  // Throws InputError on any broken invariant.
  void validate() const;
};

class RankedList {
 public:
  RankedList() = default;
  RankedList(std::vector<Response> entries, int num_responses);

  std::size_t size() const { return entries_.size(); }
  Response operator[](std::size_t i) const { return entries_[i]; }
  Response first() const { return entries_.front(); }
  const std::vector<Response>& entries() const { return entries_; }
  bool contains(Response a) const;

  friend bool operator==(const RankedList&, const RankedList&) = default;

 private:
  std::vector<Response> entries_;
};

// Unordered set of responses, stored sorted ascending.
class ResponseSet {
 public:
  ResponseSet() = default;
  ResponseSet(std::vector<Response> members, int num_responses);
  explicit ResponseSet(const RankedList& list);

  std::size_t size() const { return members_.size(); }
  const std::vector<Response>& members() const { return members_; }
  bool contains(Response a) const;

  friend bool operator==(const ResponseSet&, const ResponseSet&) = default;

 private:
  std::vector<Response> members_;
};

// Human-preferred order of a logged list; always a permutation of it.
class HumanRanking {
 public:
  HumanRanking() = default;
  HumanRanking(std::vector<Response> entries, const RankedList& logged);

  std::size_t size() const { return entries_.size(); }
  Response operator[](std::size_t i) const { return entries_[i]; }
  Response top() const { return entries_.front(); }
  const std::vector<Response>& entries() const { return entries_; }

  friend bool operator==(const HumanRanking&, const HumanRanking&) = default;

 private:
  std::vector<Response> entries_;
};

struct SoftmaxPolicy {
  Eigen::VectorXd theta;
};

struct LoggedInteraction {
  QueryIndex query = 0;
  RankedList list;
  HumanRanking human;
  std::optional<double> list_propensity;
  std::optional<double> set_propensity;

  bool aligned() const { return list.first() == human.top(); }
};

struct LoggedDataset {
  ProblemSpec spec;
  std::vector<LoggedInteraction> interactions;

  std::size_t size() const { return interactions.size(); }
  bool has_list_propensities() const;
  bool has_set_propensities() const;

  void validate() const;
};

/// Response distributions pi(.|x) for every query of a feature table. Softmax
/// policies tabulate into this; ingested propensity tables load straight into it.
class PolicyTable {
 public:
  PolicyTable() = default;
  explicit PolicyTable(std::vector<Eigen::VectorXd> probs);

  static PolicyTable softmax(const FeatureTable& features, const Eigen::VectorXd& theta);
  // (1 - alpha) * a + alpha * b, query by query.
  static PolicyTable mixture(const PolicyTable& a, const PolicyTable& b, double alpha);

  std::size_t num_queries() const { return probs_.size(); }
  const Eigen::VectorXd& probs(QueryIndex q) const;

 private:
  std::vector<Eigen::VectorXd> probs_;
};

}  // namespace rankope
