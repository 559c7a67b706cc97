#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dualplay {

enum class Role { proposer, solver };

std::string_view to_string(Role role);

struct ScoredCompletion {
  std::string text;
  double reward = 0.0;
  double advantage = 0.0;
};

struct BatchGroup {
  std::string prompt;
  std::vector<ScoredCompletion> completions;
};

struct TrainingBatch {
  Role role = Role::solver;
  std::uint64_t step = 0;
  std::vector<BatchGroup> groups;
};

/// One prompt's completions and rewards before normalization.
struct RewardGroup {
  std::string prompt;
  std::vector<std::string> completions;
  std::vector<double> rewards;
};

inline constexpr double kAdvantageEpsilon = 1e-4;

/// Group-relative advantages (r - mean) / std with the population std.
/// Groups whose std does not exceed epsilon get all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double epsilon = kAdvantageEpsilon);

/// Throws std::invalid_argument on an empty group or mismatched sizes.
TrainingBatch build_grpo_batch(Role role, std::uint64_t step, std::vector<RewardGroup> groups,
                               double epsilon = kAdvantageEpsilon);

/// Sink wire record: {role, step, groups: [{prompt, completions: [{text, reward, advantage}]}]}.
nlohmann::ordered_json to_json(const TrainingBatch& batch);
TrainingBatch batch_from_json(const nlohmann::ordered_json& j);

}  // namespace dualplay
