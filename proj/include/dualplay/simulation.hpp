#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dualplay/knowledge.hpp"
#include "dualplay/orchestrator.hpp"
#include "dualplay/simulated.hpp"

namespace dualplay {

struct SimulationConfig {
  SimulatedProposerOptions proposer;
  double proposer_initial_skill = 0.0;
  double proposer_learning_rate = 0.1;
  double solver_initial_skill = 0.0;
  double solver_learning_rate = 0.06;
  double solver_format_error_rate = 0.0;
  double heldout_min = 0.0;
  double heldout_max = 6.0;
  std::size_t heldout_points = 13;
  std::size_t knowledge_pieces = 64;  // synthetic store size when none is given

  void validate() const;
  std::vector<double> heldout_grid() const;
};

/// Deterministic synthetic corpus of short topical passages.
KnowledgeStore synthetic_knowledge(std::size_t pieces, std::uint64_t seed);

struct SimulationResult {
  std::vector<StepReport> reports;
  double final_solver_skill = 0.0;
  double final_proposer_skill = 0.0;
};

/// Closed-loop run with simulated agents. Every report carries
/// extra["heldout_pass_rate"], extra["solver_skill"] and extra["proposer_skill"],
/// measured after the step's updates.
SimulationResult run_simulation(const RunConfig& run, const RewardConfig& reward,
                                const SimulationConfig& sim, BatchSink& sink,
                                const KnowledgeStore* knowledge = nullptr,
                                const std::function<void(const StepReport&)>& observer = {});

}  // namespace dualplay
