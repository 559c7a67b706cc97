#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dualplay/batch.hpp"
#include "dualplay/grading.hpp"
#include "dualplay/knowledge.hpp"

namespace dualplay {

namespace prompts {

/// Proposer system prompt.
extern const std::string_view kProposerSystem;
/// Prefix of the knowledge block in the Proposer user prompt.
extern const std::string_view kKnowledgePrefix;
/// Instruction that closes the Proposer user prompt.
extern const std::string_view kProposerInstruction;
/// Solver system prompt.
extern const std::string_view kSolverSystem;

}  // namespace prompts

struct SamplingProfile {
  std::size_t n = 6;
  double temperature = 0.6;
  double top_p = 1.0;
  std::size_t max_completion_tokens = 6144;
  std::size_t max_prompt_tokens = 512;
};

SamplingProfile proposer_profile();    // I = 6, prompt limit 1280
SamplingProfile solver_profile();      // J = 6, prompt limit 512
SamplingProfile evaluation_profile();  // top_p 0.95

struct GenerationRequest {
  std::string system_prompt;
  std::string user_prompt;
  std::size_t n = 1;
  double temperature = 0.6;
  double top_p = 1.0;
  std::size_t max_tokens = 6144;
  std::size_t max_prompt_tokens = 512;
  std::size_t prompt_tokens = 0;
  bool over_length = false;
};

/// With k == nullptr (knowledge ablation) the knowledge block is omitted.
GenerationRequest build_proposer_prompt(const KnowledgePiece* k,
                                        const SamplingProfile& profile = proposer_profile(),
                                        const TokenCounter& counter = count_whitespace_tokens);

/// Throws std::invalid_argument on an empty question.
GenerationRequest build_solver_prompt(std::string_view question,
                                      const SamplingProfile& profile = solver_profile(),
                                      const TokenCounter& counter = count_whitespace_tokens);

/// Knowledge text embedded in a Proposer user prompt, if any.
std::optional<std::string> knowledge_from_proposer_prompt(std::string_view user_prompt);

/// Generation failed after retries or returned an unusable response.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One generation contract for remote and simulated backends.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  /// Exactly req.n completions. Throws GenerationError on failure.
  virtual std::vector<std::string> generate(const GenerationRequest& req) = 0;

  /// Results are ordered like the requests regardless of how the backend
  /// schedules them. The default runs sequentially.
  virtual std::vector<std::vector<std::string>> generate_all(
      std::span<const GenerationRequest> requests);

  /// Receives every batch emitted for this role. Remote backends leave
  /// weight updates to the external trainer.
  virtual void train(const TrainingBatch& /*batch*/) {}

  /// Latent correctness of a gold answer when the backend knows it.
  virtual std::optional<bool> gold_correct(const QAPair& /*qa*/) const { return std::nullopt; }
};

}  // namespace dualplay
