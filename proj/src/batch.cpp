#include "dualplay/batch.hpp"

#include <cmath>
#include <stdexcept>

namespace dualplay {

std::string_view to_string(Role role) { return role == Role::proposer ? "proposer" : "solver"; }

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
  std::vector<double> advantages(rewards.size(), 0.0);
  if (rewards.empty()) return advantages;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double std_dev = std::sqrt(var);
  if (!(std_dev > epsilon)) return advantages;
  for (std::size_t i = 0; i < rewards.size(); ++i) advantages[i] = (rewards[i] - mean) / std_dev;
  return advantages;
}

TrainingBatch build_grpo_batch(Role role, std::uint64_t step, std::vector<RewardGroup> groups,
                               double epsilon) {
  TrainingBatch batch;
  batch.role = role;
  batch.step = step;
  batch.groups.reserve(groups.size());
  for (auto& g : groups) {
    if (g.completions.empty()) throw std::invalid_argument("GRPO group has no completions");
    if (g.completions.size() != g.rewards.size()) {
      throw std::invalid_argument("GRPO group completions and rewards differ in length");
    }
    const auto adv = group_advantages(g.rewards, epsilon);
    BatchGroup out;
    out.prompt = std::move(g.prompt);
    out.completions.reserve(g.completions.size());
    for (std::size_t i = 0; i < g.completions.size(); ++i) {
      out.completions.push_back({std::move(g.completions[i]), g.rewards[i], adv[i]});
    }
    batch.groups.push_back(std::move(out));
  }
  return batch;
}

nlohmann::ordered_json to_json(const TrainingBatch& batch) {
  nlohmann::ordered_json j;
  j["role"] = to_string(batch.role);
  j["step"] = batch.step;
  auto& groups = j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : batch.groups) {
    nlohmann::ordered_json group;
    group["prompt"] = g.prompt;
    auto& completions = group["completions"] = nlohmann::ordered_json::array();
    for (const auto& c : g.completions) {
      completions.push_back({{"text", c.text}, {"reward", c.reward}, {"advantage", c.advantage}});
    }
    groups.push_back(std::move(group));
  }
  return j;
}

TrainingBatch batch_from_json(const nlohmann::ordered_json& j) {
  TrainingBatch batch;
  const auto role = j.at("role").get<std::string>();
  if (role == "proposer") {
    batch.role = Role::proposer;
  } else if (role == "solver") {
    batch.role = Role::solver;
  } else {
    throw std::invalid_argument("unknown batch role " + role);
  }
  batch.step = j.at("step").get<std::uint64_t>();
  for (const auto& g : j.at("groups")) {
    BatchGroup group;
    group.prompt = g.at("prompt").get<std::string>();
    for (const auto& c : g.at("completions")) {
      group.completions.push_back({c.at("text").get<std::string>(), c.at("reward").get<double>(),
                                   c.at("advantage").get<double>()});
    }
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

}  // namespace dualplay
