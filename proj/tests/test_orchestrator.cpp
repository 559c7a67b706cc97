#include <gtest/gtest.h>

#include <deque>
#include <map>
#include <stdexcept>

#include "dualplay/orchestrator.hpp"
#include "dualplay/simulated.hpp"
#include "support.hpp"

namespace dualplay {
namespace {

std::string qa_text(const std::string& q, const std::string& gold = "1") {
  return "<problem>" + q + "</problem><answer>\\boxed{" + gold + "}</answer>";
}

// Returns queued completion lists in order; repeats the last when exhausted.
class ScriptedProposer : public GenerationBackend {
 public:
  explicit ScriptedProposer(std::deque<std::vector<std::string>> script) : script_(std::move(script)) {}
  std::vector<std::string> generate(const GenerationRequest& req) override {
    prompts.push_back(req.user_prompt);
    if (script_.size() > 1) {
      auto out = script_.front();
      script_.pop_front();
      return out;
    }
    return script_.front();
  }
  void train(const TrainingBatch& batch) override { trained.push_back(batch); }
  std::vector<std::string> prompts;
  std::vector<TrainingBatch> trained;

 private:
  std::deque<std::vector<std::string>> script_;
};

// Answers each question correctly on the first `correct[q]` of n attempts.
class ScriptedSolver : public GenerationBackend {
 public:
  std::vector<std::string> generate(const GenerationRequest& req) override {
    ++calls;
    asked.push_back(req.user_prompt);
    const auto it = correct.find(req.user_prompt);
    const std::size_t k = it == correct.end() ? 0 : it->second;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < req.n; ++i) out.push_back(i < k ? "\\boxed{1}" : "\\boxed{0}");
    return out;
  }
  void train(const TrainingBatch& batch) override { trained.push_back(batch); }
  std::map<std::string, std::size_t> correct;
  std::vector<std::string> asked;
  std::vector<TrainingBatch> trained;
  int calls = 0;
};

KnowledgeStore one_piece() { return KnowledgeStore::from_pieces({{0, "Knowledge text.", 2}}); }

RunConfig online_config() {
  RunConfig run;
  run.max_steps = 1;
  return run;
}

TEST(PassingRate, Fractions) {
  EXPECT_DOUBLE_EQ(compute_passing_rate(std::vector<double>{1, 0, 1, 0, 0, 0}), 2.0 / 6.0);
  EXPECT_THROW(compute_passing_rate(std::vector<double>{}), std::invalid_argument);
}

TEST(RunConfig, RejectsZeroCounts) {
  RunConfig run;
  run.solver_attempts = 0;
  EXPECT_THROW(run.validate(), ConfigError);
}

TEST(OnlineStep, OneRetainedQuestionShapesBatches) {
  const std::vector<std::string> six = {qa_text("alpha one"), qa_text("beta two"), qa_text("gamma three"),
                                        qa_text("delta four"), qa_text("eps five"), qa_text("zeta six")};
  ScriptedProposer proposer({six});
  ScriptedSolver solver;
  solver.correct = {{"alpha one", 3}, {"beta two", 6}};
  MemorySink sink;
  const auto store = one_piece();
  Orchestrator orch(online_config(), {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();

  EXPECT_EQ(out.report.status, StepStatus::ok);
  EXPECT_EQ(out.report.counts.generated, 6u);
  EXPECT_EQ(out.report.counts.format_valid, 6u);
  EXPECT_EQ(out.report.counts.reward_valid, 2u);
  EXPECT_EQ(out.report.counts.retained, 1u);
  ASSERT_TRUE(out.proposer_batch);
  ASSERT_EQ(out.proposer_batch->groups.size(), 1u);
  EXPECT_EQ(out.proposer_batch->groups[0].completions.size(), 6u);
  ASSERT_TRUE(out.solver_batch);
  ASSERT_EQ(out.solver_batch->groups.size(), 1u);
  EXPECT_EQ(out.solver_batch->groups[0].prompt, "alpha one");
  EXPECT_EQ(out.solver_batch->groups[0].completions.size(), 6u);
  ASSERT_EQ(sink.batches.size(), 2u);
  EXPECT_EQ(sink.batches[0].role, Role::proposer);
  EXPECT_EQ(sink.batches[1].role, Role::solver);
  EXPECT_EQ(proposer.trained.size(), 1u);
  EXPECT_EQ(solver.trained.size(), 1u);

  // First question sees an empty history, so r_div = 1.
  const auto& q0 = out.report.questions[0];
  EXPECT_DOUBLE_EQ(*q0.passing_rate, 0.5);
  EXPECT_DOUBLE_EQ(q0.proposer_reward, 1.1 - 0.5 + 0.2);
  EXPECT_DOUBLE_EQ(out.report.questions[1].proposer_reward, 1.1 - 1.0 + 0.2);
  EXPECT_FALSE(out.report.questions[1].retained);
  EXPECT_EQ(out.report.questions[2].proposer_reward, 0.0);
  EXPECT_NE(proposer.prompts[0].find("External knowledge: Knowledge text."), std::string::npos);
}

TEST(OnlineStep, AllSolvedSkipsUpdates) {
  ScriptedProposer proposer({{qa_text("a"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e"), qa_text("f")}});
  ScriptedSolver solver;
  for (const char* q : {"a", "b", "c", "d", "e", "f"}) solver.correct[q] = 6;
  MemorySink sink;
  const auto store = one_piece();
  Orchestrator orch(online_config(), {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();
  EXPECT_EQ(out.report.status, StepStatus::skipped);
  EXPECT_FALSE(out.proposer_batch);
  EXPECT_FALSE(out.solver_batch);
  EXPECT_TRUE(sink.batches.empty());
  EXPECT_TRUE(proposer.trained.empty());
  EXPECT_TRUE(solver.trained.empty());
  EXPECT_EQ(orch.history().size(), 6u);
}

TEST(OnlineStep, FrozenProposerGetsNoBatch) {
  ScriptedProposer proposer({{qa_text("a b"), qa_text("c d"), qa_text("e f"), qa_text("g h"), qa_text("i j"), qa_text("k l")}});
  ScriptedSolver solver;
  solver.correct = {{"a b", 3}};
  MemorySink sink;
  auto run = online_config();
  run.frozen_proposer = true;
  const auto store = one_piece();
  Orchestrator orch(run, {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();
  EXPECT_FALSE(out.proposer_batch);
  EXPECT_TRUE(out.solver_batch);
  ASSERT_EQ(sink.batches.size(), 1u);
  EXPECT_EQ(sink.batches[0].role, Role::solver);
  // Rewards are still computed for telemetry.
  EXPECT_GT(out.report.questions[0].proposer_reward, 0.0);
}

TEST(OnlineStep, FormatInvalidStaysOutOfEverything) {
  ScriptedProposer proposer({{qa_text("good one"), "<problem>bad</problem> no answer", qa_text("x y"),
                              qa_text("z w"), qa_text("u v"), qa_text("s t")}});
  ScriptedSolver solver;
  solver.correct = {{"good one", 2}};
  MemorySink sink;
  const auto store = one_piece();
  Orchestrator orch(online_config(), {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();
  const auto& bad = out.report.questions[1];
  EXPECT_FALSE(bad.format_ok);
  EXPECT_EQ(bad.proposer_reward, 0.0);
  EXPECT_FALSE(bad.passing_rate);
  EXPECT_EQ(out.report.counts.format_valid, 5u);
  EXPECT_EQ(orch.history().size(), 5u);
  EXPECT_EQ(solver.asked.size(), 5u);
  // Still part of the Proposer group with reward 0.
  ASSERT_TRUE(out.proposer_batch);
  EXPECT_EQ(out.proposer_batch->groups[0].completions[1].reward, 0.0);
}

TEST(OnlineStep, OverLengthQuestionsAreInvalid) {
  std::string long_q;
  for (int i = 0; i < 600; ++i) long_q += "w ";
  ScriptedProposer proposer({{qa_text(long_q), qa_text("a"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e")}});
  ScriptedSolver solver;
  MemorySink sink;
  const auto store = one_piece();
  Orchestrator orch(online_config(), {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();
  EXPECT_TRUE(out.report.questions[0].over_length);
  EXPECT_FALSE(out.report.questions[0].format_ok);
  EXPECT_EQ(solver.asked.size(), 5u);
}

TEST(OnlineStep, DuplicatesLoseDiversityInOrder) {
  ScriptedProposer proposer({{qa_text("same words here"), qa_text("same words here"), qa_text("a"),
                              qa_text("b"), qa_text("c"), qa_text("d")}});
  ScriptedSolver solver;
  solver.correct = {{"same words here", 3}};
  MemorySink sink;
  const auto store = one_piece();
  Orchestrator orch(online_config(), {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();
  EXPECT_DOUBLE_EQ(out.report.questions[0].reward->diversity, 1.0);
  // H = {first}; similarity 1 > tau_sim, so r_div = 0 < tau_div.
  EXPECT_DOUBLE_EQ(out.report.questions[1].reward->diversity, 0.0);
  EXPECT_EQ(out.report.questions[1].proposer_reward, 0.0);
  EXPECT_TRUE(out.report.questions[1].retained);
}

TEST(OnlineStep, WithoutKnowledgeOmitsBlock) {
  ScriptedProposer proposer({{qa_text("a"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e"), qa_text("f")}});
  ScriptedSolver solver;
  MemorySink sink;
  auto run = online_config();
  run.without_knowledge = true;
  Orchestrator orch(run, {}, nullptr, proposer, solver, sink);
  orch.run_online_step();
  EXPECT_EQ(proposer.prompts[0], prompts::kProposerInstruction);
}

TEST(OnlineStep, WrongCompletionCountFailsStep) {
  ScriptedProposer proposer({{qa_text("a")}});
  ScriptedSolver solver;
  MemorySink sink;
  const auto store = one_piece();
  Orchestrator orch(online_config(), {}, &store, proposer, solver, sink);
  const auto out = orch.run_online_step();
  EXPECT_EQ(out.report.status, StepStatus::failed);
  EXPECT_FALSE(out.report.error.empty());
  EXPECT_TRUE(sink.batches.empty());
}

TEST(OnlineStep, PropertyCountsAreOrderedAndHistoryGetsValidOnce) {
  Rng rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    const auto store = one_piece();
    SimulatedProposerOptions opts;
    opts.format_error_rate = 0.3;
    opts.difficulty_spread = 1.5;
    SimulatedProposer proposer({0.0, 1, 0.0}, opts, trial);
    SimulatedSolver solver({rng.uniform01() * 2 - 1, 2, 0.0}, trial);
    MemorySink sink;
    RewardConfig reward;
    reward.history_capacity = 1000;
    RunConfig run;
    run.seed = trial;
    Orchestrator orch(run, reward, &store, proposer, solver, sink);
    std::size_t valid_total = 0;
    for (int s = 0; s < 10; ++s) {
      const auto out = orch.run_online_step();
      const auto& c = out.report.counts;
      ASSERT_EQ(c.generated, 6u);
      ASSERT_LE(c.retained, c.reward_valid);
      ASSERT_LE(c.reward_valid, c.format_valid);
      valid_total += c.format_valid;
      ASSERT_EQ(orch.history().size(), valid_total);
      ASSERT_EQ(out.solver_batch.has_value(), c.retained > 0);
      if (out.solver_batch) ASSERT_EQ(out.solver_batch->groups.size(), c.retained);
    }
  }
}

TEST(Offline, PhasesInterleaveAndReplayFromBuffer) {
  ScriptedProposer proposer({{qa_text("keep me"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e"), qa_text("f")}});
  ScriptedSolver solver;
  solver.correct = {{"keep me", 2}};
  MemorySink sink;
  RunConfig run;
  run.mode = RunMode::offline;
  run.proposer_steps = 3;
  run.solver_steps = 2;
  run.replay_batch_size = 2;
  run.eviction.enabled = false;
  const auto store = one_piece();
  Orchestrator orch(run, {}, &store, proposer, solver, sink);
  const auto it = orch.run_offline_iteration();
  ASSERT_EQ(it.proposer_phase.size(), 3u);
  ASSERT_EQ(it.solver_phase.size(), 2u);
  EXPECT_FALSE(it.solver_early_stop);
  EXPECT_EQ(orch.question_buffer().size(), 3u);
  for (const auto& s : it.proposer_phase) {
    EXPECT_EQ(s.report.phase, StepPhase::proposer);
    EXPECT_TRUE(s.proposer_batch);
    EXPECT_FALSE(s.solver_batch);
  }
  for (const auto& s : it.solver_phase) {
    EXPECT_EQ(s.report.phase, StepPhase::solver);
    EXPECT_FALSE(s.proposer_batch);
    ASSERT_TRUE(s.solver_batch);
    EXPECT_EQ(s.solver_batch->groups.size(), 2u);
    EXPECT_EQ(s.report.counts.replayed, 2u);
  }
  EXPECT_EQ(orch.question_buffer().entries()[0].replay_count, 2u);
  // 3 proposer batches then 2 solver batches.
  ASSERT_EQ(sink.batches.size(), 5u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(sink.batches[i].role, Role::proposer);
  for (int i = 3; i < 5; ++i) EXPECT_EQ(sink.batches[i].role, Role::solver);
}

TEST(Offline, EvictionEmptiesBufferAndStopsEarly) {
  ScriptedProposer proposer({{qa_text("keep me"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e"), qa_text("f")}});
  ScriptedSolver solver;
  solver.correct = {{"keep me", 2}};
  MemorySink sink;
  RunConfig run;
  run.mode = RunMode::offline;
  run.proposer_steps = 1;
  run.solver_steps = 5;
  run.replay_batch_size = 1;
  run.eviction = {true, 3};
  const auto store = one_piece();
  Orchestrator orch(run, {}, &store, proposer, solver, sink);
  const auto it = orch.run_offline_iteration();
  // Same rate as the peak each replay: stagnation hits patience on the third.
  ASSERT_EQ(it.solver_phase.size(), 3u);
  EXPECT_TRUE(it.solver_early_stop);
  EXPECT_EQ(it.solver_phase[2].report.counts.evicted, 1u);
  EXPECT_TRUE(orch.question_buffer().empty());

  // Next iteration refills.
  const auto next = orch.run_offline_iteration();
  EXPECT_EQ(next.iteration, 1u);
  EXPECT_EQ(next.proposer_phase[0].report.iteration, 1u);
}

TEST(Offline, PerfectReplayEvictsImmediately) {
  ScriptedProposer proposer({{qa_text("learnable"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e"), qa_text("f")}});
  ScriptedSolver solver;
  solver.correct = {{"learnable", 3}};
  MemorySink sink;
  RunConfig run;
  run.mode = RunMode::offline;
  run.proposer_steps = 1;
  run.solver_steps = 4;
  run.replay_batch_size = 1;
  run.eviction.enabled = true;
  const auto store = one_piece();
  Orchestrator orch(run, {}, &store, proposer, solver, sink);
  // The Solver masters the question right after it is buffered.
  orch.set_step_hook([&](StepReport& r) {
    if (r.phase == StepPhase::proposer) solver.correct["learnable"] = 6;
  });
  const auto it = orch.run_offline_iteration();
  ASSERT_EQ(it.solver_phase.size(), 1u);
  EXPECT_TRUE(it.solver_early_stop);
  EXPECT_TRUE(it.solver_phase[0].report.questions[0].evicted);
  // The evicting replay still trains the Solver.
  EXPECT_TRUE(it.solver_phase[0].solver_batch);
}

TEST(Offline, EmptyBufferSkipsSolverPhase) {
  ScriptedProposer proposer({{qa_text("a"), qa_text("b"), qa_text("c"), qa_text("d"), qa_text("e"), qa_text("f")}});
  ScriptedSolver solver;
  MemorySink sink;
  RunConfig run;
  run.mode = RunMode::offline;
  run.proposer_steps = 2;
  const auto store = one_piece();
  Orchestrator orch(run, {}, &store, proposer, solver, sink);
  const auto it = orch.run_offline_iteration();
  EXPECT_TRUE(it.solver_phase.empty());
  EXPECT_TRUE(it.solver_early_stop);
  EXPECT_TRUE(sink.batches.empty());
}

TEST(RewardModes, PartialRandomZeroesUnformatted) {
  Rng rng(62);
  SolveAttempt bad;
  bad.format_ok = false;
  bad.reward = 0.0;
  SolveAttempt good;
  good.format_ok = true;
  good.reward = 0.0;
  std::size_t ones = 0;
  for (int i = 0; i < 4000; ++i) {
    EXPECT_EQ(apply_reward_mode(RewardMode::partial_random, bad, rng), 0.0);
    ones += apply_reward_mode(RewardMode::partial_random, good, rng) == 1.0;
  }
  EXPECT_NEAR(ones / 4000.0, 0.5, 0.05);
  good.reward = 1.0;
  EXPECT_EQ(apply_reward_mode(RewardMode::normal, good, rng), 1.0);
  EXPECT_EQ(apply_reward_mode(RewardMode::normal, bad, rng), 0.0);
}

TEST(RewardModes, Parse) {
  EXPECT_EQ(parse_reward_mode("full_random"), RewardMode::full_random);
  EXPECT_EQ(parse_reward_mode("partial_random"), RewardMode::partial_random);
  EXPECT_EQ(parse_run_mode("offline"), RunMode::offline);
  EXPECT_ANY_THROW(parse_reward_mode("bogus"));
}

TEST(Reports, JsonRoundTrip) {
  const auto store = one_piece();
  SimulatedProposer proposer({0.0, 1, 0.0}, {}, 4);
  SimulatedSolver solver({0.0, 2, 0.0}, 4);
  MemorySink sink;
  Orchestrator orch({}, {}, &store, proposer, solver, sink);
  orch.set_step_hook([](StepReport& r) { r.extra["probe"] = 0.25; });
  for (int i = 0; i < 5; ++i) {
    const auto out = orch.run_online_step();
    const auto j = to_json(out.report);
    EXPECT_EQ(to_json(report_from_json(j)).dump(), j.dump());
    EXPECT_EQ(out.report.extra.at("probe"), 0.25);
  }
}

TEST(Determinism, SameSeedSameBatches) {
  auto run_once = [](std::uint64_t seed) {
    const auto store = one_piece();
    SimulatedProposer proposer({0.0, 1, 0.1}, {}, seed);
    SimulatedSolver solver({0.0, 2, 0.05}, seed);
    MemorySink sink;
    RunConfig run;
    run.seed = seed;
    run.max_steps = 20;
    Orchestrator orch(run, {}, &store, proposer, solver, sink);
    orch.run([](const StepReport&) {});
    std::string all;
    for (const auto& b : sink.batches) all += to_json(b).dump() + "\n";
    return all;
  };
  EXPECT_EQ(run_once(5), run_once(5));
  EXPECT_NE(run_once(5), run_once(6));
}

}  // namespace
}  // namespace dualplay
