#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualplay/agents.hpp"
#include "dualplay/batch.hpp"
#include "dualplay/buffers.hpp"
#include "dualplay/grading.hpp"
#include "dualplay/knowledge.hpp"
#include "dualplay/reward.hpp"
#include "dualplay/rng.hpp"
#include "dualplay/sink.hpp"

namespace dualplay {

enum class RunMode { online, offline };
enum class RewardMode { normal, full_random, partial_random };

std::string_view to_string(RunMode mode);
std::string_view to_string(RewardMode mode);
RunMode parse_run_mode(std::string_view text);
RewardMode parse_reward_mode(std::string_view text);

struct RunConfig {
  RunMode mode = RunMode::online;
  std::size_t proposer_generations = 6;  // I
  std::size_t solver_attempts = 6;       // J
  std::size_t max_steps = 600;           // T, online
  std::size_t proposer_steps = 10;       // T_P
  std::size_t solver_steps = 5;          // T_S
  std::size_t max_iterations = 60;       // offline outer loop
  std::size_t replay_batch_size = 6;
  std::size_t knowledge_per_step = 1;

  bool without_knowledge = false;
  bool frozen_proposer = false;
  bool without_diversity = false;
  RewardMode reward_mode = RewardMode::normal;
  EvictionPolicy eviction;

  std::uint64_t seed = 0;
  SamplingProfile proposer_sampling = proposer_profile();
  SamplingProfile solver_sampling = solver_profile();

  void validate() const;
};

/// Passing rate: fraction of attempts with reward 1. Throws on an empty list.
double compute_passing_rate(std::span<const SolveAttempt> attempts);
double compute_passing_rate(std::span<const double> rewards);

/// Solver reward under an ablation mode.
double apply_reward_mode(RewardMode mode, const SolveAttempt& attempt, Rng& rng);

enum class StepPhase { online, proposer, solver };
enum class StepStatus { ok, skipped, failed };

std::string_view to_string(StepPhase phase);
std::string_view to_string(StepStatus status);

struct QuestionRecord {
  std::size_t index = 0;
  std::optional<KnowledgeId> knowledge_id;
  std::string question;
  std::string gold_answer;
  bool format_ok = false;   // parsed and within the Solver prompt limit
  bool over_length = false;
  std::vector<double> attempt_rewards;
  std::optional<double> passing_rate;
  std::optional<ProposerRewardBreakdown> reward;
  double proposer_reward = 0.0;
  bool reward_valid = false;
  bool retained = false;
  std::optional<bool> gold_correct;
  std::optional<std::uint64_t> buffer_entry;  // solver phase only
  bool evicted = false;
};

struct StepCounts {
  std::size_t generated = 0;
  std::size_t format_valid = 0;
  std::size_t reward_valid = 0;
  std::size_t retained = 0;
  std::size_t replayed = 0;
  std::size_t evicted = 0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> values);

struct StepReport {
  std::uint64_t step = 0;
  std::uint64_t iteration = 0;  // offline iteration, 0 online
  StepPhase phase = StepPhase::online;
  StepStatus status = StepStatus::ok;
  std::string error;
  StepCounts counts;
  std::vector<QuestionRecord> questions;
  std::optional<MeanStd> proposer_reward;
  std::optional<MeanStd> solver_reward;
  bool proposer_batch_emitted = false;
  bool solver_batch_emitted = false;
  std::size_t history_size = 0;
  std::size_t buffer_size = 0;
  std::map<std::string, double> extra;  // harness metrics (e.g. held-out pass rate)
};

nlohmann::ordered_json to_json(const StepReport& report);
StepReport report_from_json(const nlohmann::ordered_json& j);

struct StepOutcome {
  StepReport report;
  std::optional<TrainingBatch> proposer_batch;
  std::optional<TrainingBatch> solver_batch;
};

struct OfflineIterationReport {
  std::uint64_t iteration = 0;
  std::vector<StepOutcome> proposer_phase;
  std::vector<StepOutcome> solver_phase;
  bool solver_early_stop = false;
};

/// The dual-play training loop. Owns H and B; single-threaded across steps.
class Orchestrator {
 public:
  Orchestrator(RunConfig run, RewardConfig reward, const KnowledgeStore* knowledge,
               GenerationBackend& proposer, GenerationBackend& solver, BatchSink& sink,
               FormatTags tags = {}, TokenCounter counter = count_whitespace_tokens);

  /// One online iteration: sample k, I QA pairs, J attempts each, rewards,
  /// retention, history updates, and batches unless nothing was retained.
  StepOutcome run_online_step();

  /// Phase A (T_P Proposer steps filling B) then phase B (T_S replay steps).
  OfflineIterationReport run_offline_iteration();

  /// Runs the configured schedule, reporting each step in order.
  void run(const std::function<void(const StepReport&)>& observer);

  /// Called on every report as its step finishes, before it is returned.
  void set_step_hook(std::function<void(StepReport&)> hook) { step_hook_ = std::move(hook); }

  const HistoryBuffer& history() const { return history_; }
  const QuestionBuffer& question_buffer() const { return buffer_; }
  void restore_buffer(QuestionBuffer buffer) { buffer_ = std::move(buffer); }
  const RunConfig& run_config() const { return run_; }
  const RewardConfig& reward_config() const { return reward_; }
  std::uint64_t steps_taken() const { return next_step_; }

 private:
  StepOutcome proposer_round(StepPhase phase);
  StepOutcome solver_replay_step();
  void deliver(const TrainingBatch& batch);
  StepOutcome finish(StepOutcome outcome);

  RunConfig run_;
  RewardConfig reward_;
  const KnowledgeStore* knowledge_;
  GenerationBackend& proposer_;
  GenerationBackend& solver_;
  BatchSink& sink_;
  FormatTags tags_;
  TokenCounter counter_;

  HistoryBuffer history_;
  QuestionBuffer buffer_;
  Rng knowledge_rng_;
  Rng reward_rng_;
  std::uint64_t next_step_ = 0;
  std::uint64_t next_iteration_ = 0;
  std::function<void(StepReport&)> step_hook_;
};

}  // namespace dualplay
