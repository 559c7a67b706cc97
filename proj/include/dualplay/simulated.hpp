#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualplay/agents.hpp"
#include "dualplay/rng.hpp"

namespace dualplay {

// Desk-scale stand-ins for the two policies. Questions are templated
// integer arithmetic carrying a latent difficulty tag, so both agents (and
// the analysis tools) can recover the true answer from the question text.

struct SimulatedAgentState {
  double skill = 0.0;
  std::uint64_t style_seed = 0;
  double learning_rate = 0.0;
};

struct SimulatedProposerOptions {
  double difficulty_spread = 0.5;  // stddev of d around the Proposer skill
  double format_error_rate = 0.0;  // epsilon_format
  double wrong_answer_rate = 0.0;  // epsilon_wrong
};

struct SimulatedQuestion {
  double difficulty = 0.0;
  long long truth = 0;
};

/// Latent difficulty and true answer of a simulated question or completion.
std::optional<SimulatedQuestion> parse_simulated_question(std::string_view text);

/// n Proposer completions grounded in k (nullptr: no knowledge).
std::vector<std::string> generate_simulated_proposer(const SimulatedAgentState& state,
                                                     const KnowledgePiece* k, Rng& rng,
                                                     std::size_t n,
                                                     const SimulatedProposerOptions& options = {});

/// Logistic success probability sigma(skill - difficulty).
double solver_success_probability(double skill, double difficulty);

/// n Solver completions; each is correct independently with probability
/// sigma(skill - d). Questions that do not parse get unboxed replies.
std::vector<std::string> generate_simulated_solver(const SimulatedAgentState& state,
                                                   std::string_view question, Rng& rng,
                                                   std::size_t n, double format_error_rate = 0.0);

/// skill += learning_rate * signal.
SimulatedAgentState update_skill(SimulatedAgentState state, double signal);

/// Policy-gradient step on the mean of the Gaussian difficulty policy:
/// skill += lr * mean(A * (d - skill)) / spread^2 over the batch.
SimulatedAgentState update_proposer_skill(SimulatedAgentState state, const TrainingBatch& batch,
                                          double difficulty_spread);

/// Mean logistic pass rate over a set of held-out difficulties.
double expected_pass_rate(double skill, std::span<const double> difficulties);

class SimulatedProposer : public GenerationBackend {
 public:
  SimulatedProposer(SimulatedAgentState state, SimulatedProposerOptions options, std::uint64_t seed);

  std::vector<std::string> generate(const GenerationRequest& req) override;
  void train(const TrainingBatch& batch) override;
  std::optional<bool> gold_correct(const QAPair& qa) const override;

  const SimulatedAgentState& state() const { return state_; }

 private:
  SimulatedAgentState state_;
  SimulatedProposerOptions options_;
  Rng rng_;
};

class SimulatedSolver : public GenerationBackend {
 public:
  SimulatedSolver(SimulatedAgentState state, std::uint64_t seed, double format_error_rate = 0.0);

  std::vector<std::string> generate(const GenerationRequest& req) override;
  void train(const TrainingBatch& batch) override;

  const SimulatedAgentState& state() const { return state_; }
  double expected_pass_rate(std::span<const double> difficulties) const {
    return dualplay::expected_pass_rate(state_.skill, difficulties);
  }

 private:
  SimulatedAgentState state_;
  Rng rng_;
  double format_error_rate_;
};

}  // namespace dualplay
