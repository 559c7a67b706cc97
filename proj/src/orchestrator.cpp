#include "dualplay/orchestrator.hpp"

#include <algorithm>
#include <cmath>

#include "json_io.hpp"

namespace dualplay {

using nlohmann::ordered_json;

namespace {

enum : std::uint64_t { kKnowledgeStream = 1, kRewardStream = 2 };

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::pair<std::string_view, Enum> (&table)[N],
                const char* what) {
  for (const auto& [name, value] : table) {
    if (name == text) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " \"" + std::string(text) + "\"");
}

constexpr std::pair<std::string_view, RunMode> kRunModes[] = {{"online", RunMode::online},
                                                              {"offline", RunMode::offline}};
constexpr std::pair<std::string_view, RewardMode> kRewardModes[] = {
    {"normal", RewardMode::normal},
    {"full_random", RewardMode::full_random},
    {"partial_random", RewardMode::partial_random}};
constexpr std::pair<std::string_view, StepPhase> kPhases[] = {{"online", StepPhase::online},
                                                              {"proposer", StepPhase::proposer},
                                                              {"solver", StepPhase::solver}};
constexpr std::pair<std::string_view, StepStatus> kStatuses[] = {{"ok", StepStatus::ok},
                                                                 {"skipped", StepStatus::skipped},
                                                                 {"failed", StepStatus::failed}};

template <class Enum, std::size_t N>
std::string_view enum_name(Enum value, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json mean_std_json(const std::optional<MeanStd>& v) {
  if (!v) return nullptr;
  return {{"mean", v->mean}, {"std", v->std}};
}

std::optional<MeanStd> mean_std_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return MeanStd{j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace

std::string_view to_string(RunMode mode) { return enum_name(mode, kRunModes); }
std::string_view to_string(RewardMode mode) { return enum_name(mode, kRewardModes); }
std::string_view to_string(StepPhase phase) { return enum_name(phase, kPhases); }
std::string_view to_string(StepStatus status) { return enum_name(status, kStatuses); }
RunMode parse_run_mode(std::string_view text) { return parse_enum(text, kRunModes, "run mode"); }
RewardMode parse_reward_mode(std::string_view text) {
  return parse_enum(text, kRewardModes, "reward mode");
}

void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
  };
  positive(proposer_generations, "I (proposer_generations)");
  positive(solver_attempts, "J (solver_attempts)");
  positive(max_steps, "T (max_steps)");
  positive(proposer_steps, "T_P (proposer_steps)");
  positive(solver_steps, "T_S (solver_steps)");
  positive(max_iterations, "max_iterations");
  positive(replay_batch_size, "replay_batch_size");
  positive(knowledge_per_step, "knowledge_per_step");
}

double compute_passing_rate(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("passing rate needs at least one attempt");
  std::size_t correct = 0;
  for (double r : rewards) {
    if (r == 1.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rewards.size());
}

double compute_passing_rate(std::span<const SolveAttempt> attempts) {
  std::vector<double> rewards;
  rewards.reserve(attempts.size());
  for (const auto& a : attempts) rewards.push_back(a.reward);
  return compute_passing_rate(rewards);
}

double apply_reward_mode(RewardMode mode, const SolveAttempt& attempt, Rng& rng) {
  switch (mode) {
    case RewardMode::normal:
      return attempt.reward;
    case RewardMode::full_random:
      return rng.bernoulli(0.5) ? 1.0 : 0.0;
    case RewardMode::partial_random:
      if (!attempt.format_ok) return 0.0;
      return rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  return 0.0;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

ordered_json to_json(const StepReport& r) {
  ordered_json j;
  j["step"] = r.step;
  j["iteration"] = r.iteration;
  j["phase"] = to_string(r.phase);
  j["status"] = to_string(r.status);
  j["error"] = r.error;
  j["counts"] = {{"generated", r.counts.generated},     {"format_valid", r.counts.format_valid},
                 {"reward_valid", r.counts.reward_valid}, {"retained", r.counts.retained},
                 {"replayed", r.counts.replayed},       {"evicted", r.counts.evicted}};
  j["proposer_reward"] = mean_std_json(r.proposer_reward);
  j["solver_reward"] = mean_std_json(r.solver_reward);
  j["proposer_batch_emitted"] = r.proposer_batch_emitted;
  j["solver_batch_emitted"] = r.solver_batch_emitted;
  j["history_size"] = r.history_size;
  j["buffer_size"] = r.buffer_size;
  auto& extra = j["extra"] = ordered_json::object();
  for (const auto& [k, v] : r.extra) extra[k] = v;
  auto& questions = j["questions"] = ordered_json::array();
  for (const auto& q : r.questions) {
    ordered_json qj;
    qj["index"] = q.index;
    qj["knowledge_id"] = q.knowledge_id ? ordered_json(*q.knowledge_id) : ordered_json(nullptr);
    qj["question"] = q.question;
    qj["gold_answer"] = q.gold_answer;
    qj["format_ok"] = q.format_ok;
    qj["over_length"] = q.over_length;
    qj["attempt_rewards"] = q.attempt_rewards;
    qj["passing_rate"] = optional_json(q.passing_rate);
    if (q.reward) {
      qj["r_diff"] = q.reward->difficulty;
      qj["r_div"] = q.reward->diversity;
      qj["clipped"] = q.reward->clipped;
    } else {
      qj["r_diff"] = nullptr;
      qj["r_div"] = nullptr;
      qj["clipped"] = true;
    }
    qj["r_p"] = q.proposer_reward;
    qj["reward_valid"] = q.reward_valid;
    qj["retained"] = q.retained;
    qj["gold_correct"] = q.gold_correct ? ordered_json(*q.gold_correct) : ordered_json(nullptr);
    qj["buffer_entry"] = q.buffer_entry ? ordered_json(*q.buffer_entry) : ordered_json(nullptr);
    qj["evicted"] = q.evicted;
    questions.push_back(std::move(qj));
  }
  return j;
}

StepReport report_from_json(const ordered_json& j) {
  StepReport r;
  r.step = j.at("step").get<std::uint64_t>();
  r.iteration = j.at("iteration").get<std::uint64_t>();
  r.phase = parse_enum(j.at("phase").get<std::string>(), kPhases, "phase");
  r.status = parse_enum(j.at("status").get<std::string>(), kStatuses, "status");
  r.error = j.at("error").get<std::string>();
  const auto& c = j.at("counts");
  r.counts.generated = c.at("generated").get<std::size_t>();
  r.counts.format_valid = c.at("format_valid").get<std::size_t>();
  r.counts.reward_valid = c.at("reward_valid").get<std::size_t>();
  r.counts.retained = c.at("retained").get<std::size_t>();
  r.counts.replayed = c.at("replayed").get<std::size_t>();
  r.counts.evicted = c.at("evicted").get<std::size_t>();
  r.proposer_reward = mean_std_from(j.at("proposer_reward"));
  r.solver_reward = mean_std_from(j.at("solver_reward"));
  r.proposer_batch_emitted = j.at("proposer_batch_emitted").get<bool>();
  r.solver_batch_emitted = j.at("solver_batch_emitted").get<bool>();
  r.history_size = j.at("history_size").get<std::size_t>();
  r.buffer_size = j.at("buffer_size").get<std::size_t>();
  for (const auto& [k, v] : j.at("extra").items()) r.extra[k] = v.get<double>();
  for (const auto& qj : j.at("questions")) {
    QuestionRecord q;
    q.index = qj.at("index").get<std::size_t>();
    if (!qj.at("knowledge_id").is_null()) q.knowledge_id = qj.at("knowledge_id").get<KnowledgeId>();
    q.question = qj.at("question").get<std::string>();
    q.gold_answer = qj.at("gold_answer").get<std::string>();
    q.format_ok = qj.at("format_ok").get<bool>();
    q.over_length = qj.at("over_length").get<bool>();
    q.attempt_rewards = qj.at("attempt_rewards").get<std::vector<double>>();
    if (!qj.at("passing_rate").is_null()) q.passing_rate = qj.at("passing_rate").get<double>();
    if (!qj.at("r_diff").is_null()) {
      ProposerRewardBreakdown b;
      b.passing_rate = q.passing_rate.value_or(0.0);
      b.difficulty = qj.at("r_diff").get<double>();
      b.diversity = qj.at("r_div").get<double>();
      b.clipped = qj.at("clipped").get<bool>();
      b.final = qj.at("r_p").get<double>();
      q.reward = b;
    }
    q.proposer_reward = qj.at("r_p").get<double>();
    q.reward_valid = qj.at("reward_valid").get<bool>();
    q.retained = qj.at("retained").get<bool>();
    if (!qj.at("gold_correct").is_null()) q.gold_correct = qj.at("gold_correct").get<bool>();
    if (!qj.at("buffer_entry").is_null()) q.buffer_entry = qj.at("buffer_entry").get<std::uint64_t>();
    q.evicted = qj.at("evicted").get<bool>();
    r.questions.push_back(std::move(q));
  }
  return r;
}

Orchestrator::Orchestrator(RunConfig run, RewardConfig reward, const KnowledgeStore* knowledge,
                           GenerationBackend& proposer, GenerationBackend& solver, BatchSink& sink,
                           FormatTags tags, TokenCounter counter)
    : run_(std::move(run)),
      reward_(reward),
      knowledge_(knowledge),
      proposer_(proposer),
      solver_(solver),
      sink_(sink),
      tags_(std::move(tags)),
      counter_(std::move(counter)),
      history_(reward.history_capacity),
      knowledge_rng_(mix_seed(run_.seed, kKnowledgeStream)),
      reward_rng_(mix_seed(run_.seed, kRewardStream)) {
  run_.validate();
  reward_.validate();
  if (!run_.without_knowledge && (knowledge_ == nullptr || knowledge_->empty())) {
    throw ConfigError("a non-empty knowledge store is required unless without_knowledge is set");
  }
  run_.proposer_sampling.n = run_.proposer_generations;
  run_.solver_sampling.n = run_.solver_attempts;
}

void Orchestrator::deliver(const TrainingBatch& batch) {
  sink_.emit(batch);
  (batch.role == Role::proposer ? proposer_ : solver_).train(batch);
}

StepOutcome Orchestrator::finish(StepOutcome outcome) {
  outcome.report.history_size = history_.size();
  outcome.report.buffer_size = buffer_.size();
  if (step_hook_) step_hook_(outcome.report);
  return outcome;
}

StepOutcome Orchestrator::proposer_round(StepPhase phase) {
  StepOutcome outcome;
  StepReport& report = outcome.report;
  report.step = next_step_++;
  report.iteration = phase == StepPhase::online ? 0 : next_iteration_;
  report.phase = phase;

  // Knowledge, then I QA pairs per piece.
  std::vector<GenerationRequest> proposer_requests;
  std::vector<std::optional<KnowledgeId>> piece_ids;
  for (std::size_t g = 0; g < run_.knowledge_per_step; ++g) {
    const KnowledgePiece* k = run_.without_knowledge ? nullptr : &knowledge_->sample(knowledge_rng_);
    proposer_requests.push_back(build_proposer_prompt(k, run_.proposer_sampling, counter_));
    piece_ids.push_back(k ? std::optional<KnowledgeId>(k->id) : std::nullopt);
  }

  std::vector<QAPair> pairs;
  std::vector<std::size_t> pair_piece;
  std::vector<GenerationRequest> solver_requests;
  std::vector<std::size_t> solver_owner;  // pair index per solver request
  std::vector<bool> over_length;
  std::vector<std::vector<std::string>> solver_completions;
  try {
    const auto generated = proposer_.generate_all(proposer_requests);
    for (std::size_t g = 0; g < generated.size(); ++g) {
      if (generated[g].size() != run_.proposer_generations) {
        throw GenerationError("proposer returned " + std::to_string(generated[g].size()) +
                              " completions, expected " +
                              std::to_string(run_.proposer_generations));
      }
      for (const auto& text : generated[g]) {
        pairs.push_back(extract_qa_pair(text, piece_ids[g], tags_));
        pair_piece.push_back(g);
      }
    }
    over_length.assign(pairs.size(), false);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (!pairs[i].format_ok) continue;
      auto req = build_solver_prompt(pairs[i].question, run_.solver_sampling, counter_);
      if (req.over_length) {
        over_length[i] = true;
        continue;
      }
      solver_requests.push_back(std::move(req));
      solver_owner.push_back(i);
    }
    // J attempts per format-valid question.
    solver_completions = solver_.generate_all(solver_requests);
    for (const auto& c : solver_completions) {
      if (c.size() != run_.solver_attempts) {
        throw GenerationError("solver returned " + std::to_string(c.size()) +
                              " completions, expected " + std::to_string(run_.solver_attempts));
      }
    }
  } catch (const GenerationError& e) {
    report.status = StepStatus::failed;
    report.error = e.what();
    return finish(std::move(outcome));
  }

  report.questions.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& q = report.questions[i];
    q.index = i;
    q.knowledge_id = pairs[i].knowledge_id;
    q.question = pairs[i].question;
    q.gold_answer = pairs[i].gold_answer;
    q.over_length = over_length[i];
    q.format_ok = pairs[i].format_ok && !over_length[i];
  }

  // Grade, apply the reward mode, passing rates.
  std::vector<std::vector<double>> attempt_rewards(pairs.size());
  for (std::size_t s = 0; s < solver_owner.size(); ++s) {
    const std::size_t i = solver_owner[s];
    for (const auto& text : solver_completions[s]) {
      const auto attempt = grade_attempt(text, pairs[i], tags_);
      attempt_rewards[i].push_back(apply_reward_mode(run_.reward_mode, attempt, reward_rng_));
    }
  }

  // Rewards in question order; H grows inside the loop.
  std::vector<double> proposer_rewards;
  proposer_rewards.reserve(pairs.size());
  std::vector<double> all_solver_rewards;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& q = report.questions[i];
    if (q.format_ok) {
      const double p = compute_passing_rate(attempt_rewards[i]);
      const double r_div = history_.diversity(token_set(q.question), reward_);
      q.attempt_rewards = attempt_rewards[i];
      q.passing_rate = p;
      q.reward = proposer_reward(p, r_div, reward_, !run_.without_diversity);
      q.proposer_reward = q.reward->final;
      q.reward_valid = passes_validity(p, reward_);
      q.retained = is_retained(p, reward_);
      history_.push(q.question);
      all_solver_rewards.insert(all_solver_rewards.end(), attempt_rewards[i].begin(),
                                attempt_rewards[i].end());
    }
    q.gold_correct = proposer_.gold_correct(pairs[i]);
    proposer_rewards.push_back(q.proposer_reward);

    ++report.counts.generated;
    if (q.format_ok) ++report.counts.format_valid;
    if (q.reward_valid) ++report.counts.reward_valid;
    if (q.retained) ++report.counts.retained;
  }
  report.proposer_reward = mean_std(proposer_rewards);
  if (!all_solver_rewards.empty()) report.solver_reward = mean_std(all_solver_rewards);

  // Offline phase A stores retained questions.
  if (phase == StepPhase::proposer) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (report.questions[i].retained) {
        buffer_.add(pairs[i], *report.questions[i].passing_rate, report.step, reward_);
      }
    }
  }

  // No retained question means no update for either role.
  if (report.counts.retained == 0) {
    report.status = StepStatus::skipped;
  } else {
    if (!run_.frozen_proposer) {
      std::vector<RewardGroup> groups(proposer_requests.size());
      for (std::size_t g = 0; g < proposer_requests.size(); ++g) {
        groups[g].prompt = proposer_requests[g].user_prompt;
      }
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto& group = groups[pair_piece[i]];
        group.completions.push_back(pairs[i].raw_completion);
        group.rewards.push_back(report.questions[i].proposer_reward);
      }
      outcome.proposer_batch = build_grpo_batch(Role::proposer, report.step, std::move(groups));
    }
    if (phase == StepPhase::online) {
      std::vector<RewardGroup> groups;
      for (std::size_t s = 0; s < solver_owner.size(); ++s) {
        const std::size_t i = solver_owner[s];
        if (!report.questions[i].retained) continue;
        groups.push_back({solver_requests[s].user_prompt, solver_completions[s], attempt_rewards[i]});
      }
      outcome.solver_batch = build_grpo_batch(Role::solver, report.step, std::move(groups));
    }
  }

  if (outcome.proposer_batch) {
    deliver(*outcome.proposer_batch);
    report.proposer_batch_emitted = true;
  }
  if (outcome.solver_batch) {
    deliver(*outcome.solver_batch);
    report.solver_batch_emitted = true;
  }
  return finish(std::move(outcome));
}

StepOutcome Orchestrator::solver_replay_step() {
  StepOutcome outcome;
  StepReport& report = outcome.report;
  report.step = next_step_++;
  report.iteration = next_iteration_;
  report.phase = StepPhase::solver;

  // Sequential replay.
  const auto ids = buffer_.replay(run_.replay_batch_size);
  std::vector<GenerationRequest> requests;
  std::vector<QAPair> pairs;
  requests.reserve(ids.size());
  for (auto id : ids) {
    const auto* entry = buffer_.find(id);
    pairs.push_back(entry->qa);
    requests.push_back(build_solver_prompt(entry->qa.question, run_.solver_sampling, counter_));
  }

  std::vector<std::vector<std::string>> completions;
  try {
    completions = solver_.generate_all(requests);
    for (const auto& c : completions) {
      if (c.size() != run_.solver_attempts) {
        throw GenerationError("solver returned " + std::to_string(c.size()) +
                              " completions, expected " + std::to_string(run_.solver_attempts));
      }
    }
  } catch (const GenerationError& e) {
    report.status = StepStatus::failed;
    report.error = e.what();
    return finish(std::move(outcome));
  }

  std::vector<RewardGroup> groups;
  std::vector<double> all_rewards;
  for (std::size_t n = 0; n < ids.size(); ++n) {
    QuestionRecord q;
    q.index = n;
    q.knowledge_id = pairs[n].knowledge_id;
    q.question = pairs[n].question;
    q.gold_answer = pairs[n].gold_answer;
    q.format_ok = true;
    q.buffer_entry = ids[n];

    auto* entry = buffer_.find(ids[n]);
    if (entry == nullptr) {
      // Evicted earlier in this same replay batch.
      report.questions.push_back(std::move(q));
      continue;
    }
    std::vector<double> rewards;
    for (const auto& text : completions[n]) {
      rewards.push_back(apply_reward_mode(run_.reward_mode, grade_attempt(text, pairs[n], tags_),
                                          reward_rng_));
    }
    const double p = compute_passing_rate(rewards);
    q.attempt_rewards = rewards;
    q.passing_rate = p;
    q.retained = true;
    q.reward_valid = true;
    if (buffer_evict_check(*entry, p, run_.eviction) == EvictDecision::evict) {
      buffer_.remove(ids[n]);
      q.evicted = true;
      ++report.counts.evicted;
    }
    ++report.counts.replayed;
    all_rewards.insert(all_rewards.end(), rewards.begin(), rewards.end());
    groups.push_back({requests[n].user_prompt, std::move(completions[n]), std::move(rewards)});
    report.questions.push_back(std::move(q));
  }

  if (!all_rewards.empty()) report.solver_reward = mean_std(all_rewards);
  if (!groups.empty()) {
    outcome.solver_batch = build_grpo_batch(Role::solver, report.step, std::move(groups));
    deliver(*outcome.solver_batch);
    report.solver_batch_emitted = true;
  }
  return finish(std::move(outcome));
}

StepOutcome Orchestrator::run_online_step() { return proposer_round(StepPhase::online); }

OfflineIterationReport Orchestrator::run_offline_iteration() {
  OfflineIterationReport out;
  out.iteration = next_iteration_;
  for (std::size_t u = 0; u < run_.proposer_steps; ++u) {
    out.proposer_phase.push_back(proposer_round(StepPhase::proposer));
  }
  for (std::size_t v = 0; v < run_.solver_steps; ++v) {
    if (buffer_.empty()) {
      out.solver_early_stop = true;
      break;
    }
    out.solver_phase.push_back(solver_replay_step());
    if (buffer_.empty()) {
      out.solver_early_stop = v + 1 < run_.solver_steps;
      break;
    }
  }
  ++next_iteration_;
  return out;
}

void Orchestrator::run(const std::function<void(const StepReport&)>& observer) {
  if (run_.mode == RunMode::online) {
    for (std::size_t t = 0; t < run_.max_steps; ++t) observer(run_online_step().report);
    return;
  }
  for (std::size_t t = 0; t < run_.max_iterations; ++t) {
    const auto iteration = run_offline_iteration();
    for (const auto& s : iteration.proposer_phase) observer(s.report);
    for (const auto& s : iteration.solver_phase) observer(s.report);
  }
}

}  // namespace dualplay
