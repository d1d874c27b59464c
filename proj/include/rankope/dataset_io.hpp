#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rankope/reward.hpp"
#include "rankope/types.hpp"

namespace rankope {

// How the header describes the feature table: inline, or as a seed that
// synthetic_features() expands.
struct FeatureSource {
  std::optional<std::uint64_t> synthetic_seed;
  int latent_dim = 4;
};

/// Writes `<header>` (JSON) and the interactions as JSON lines next to it,
/// named after the header's stem with a .jsonl extension.
void save_dataset(const LoggedDataset& data, const std::filesystem::path& header,
                  const FeatureSource& source = {});
/// Reads and validates a dataset. Parse errors name the JSONL line, consistency
/// errors the 0-based interaction index.
LoggedDataset load_dataset(const std::filesystem::path& header);

// One JSON object per interaction with fields query, list, human, and the
// propensities when present.
std::string interactions_to_jsonl(const LoggedDataset& data);
std::vector<LoggedInteraction> interactions_from_jsonl(std::istream& in, int num_responses);

// Policy files: {"theta": [...]} for a softmax policy or {"probs": [[...], ...]}
// for a table of response distributions, one row per query.
using PolicyFile = std::variant<Eigen::VectorXd, PolicyTable>;
PolicyFile load_policy(const std::filesystem::path& path);
void save_theta(const std::filesystem::path& path, const Eigen::VectorXd& theta);
void save_policy_table(const std::filesystem::path& path, const PolicyTable& table);
// Tabulates either kind of policy file over the dataset's feature table.
PolicyTable policy_table(const PolicyFile& policy, const FeatureTable& features);

void save_model(const std::filesystem::path& path, const RewardModel& model);
RewardModel load_model(const std::filesystem::path& path, const FeatureTablePtr& clean_features);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace rankope
