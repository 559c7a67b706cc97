#include "dualplay/agents.hpp"

namespace dualplay {

namespace prompts {

const std::string_view kProposerSystem =
    "You are the proposer in a proposer-solver game. Your task is to create a challenging, "
    "well-structured, diverse, and unambiguous mathematical problem that has a verifiable "
    "numerical answer, using the provided external and internal knowledge as context.\n"
    "\n"
    "Enclose the problem statement within <problem>...</problem> tags.\n"
    "Provide a detailed step-by-step solution, including a brief verification or sanity check, "
    "within <answer>...</answer> tags.\n"
    "The final numerical result must be enclosed in \\boxed{} inside the <answer> section.";

const std::string_view kKnowledgePrefix = "External knowledge: ";

const std::string_view kProposerInstruction =
    "Now, please create a challenging, well-structured, diverse, and unambiguous mathematical "
    "problem that has a verifiable numerical answer, using the provided external and internal "
    "knowledge as context.";

const std::string_view kSolverSystem =
    "Please reason step by step, and put your final answer within \\boxed{}.";

}  // namespace prompts

namespace {

constexpr std::string_view kBlockSeparator = "\n\n";

void fill_sampling(GenerationRequest& req, const SamplingProfile& profile,
                   const TokenCounter& counter) {
  req.n = profile.n;
  req.temperature = profile.temperature;
  req.top_p = profile.top_p;
  req.max_tokens = profile.max_completion_tokens;
  req.max_prompt_tokens = profile.max_prompt_tokens;
  req.prompt_tokens = counter(req.system_prompt) + counter(req.user_prompt);
  req.over_length = req.prompt_tokens > req.max_prompt_tokens;
}

}  // namespace

SamplingProfile proposer_profile() {
  SamplingProfile p;
  p.max_prompt_tokens = 1280;
  return p;
}

SamplingProfile solver_profile() { return SamplingProfile{}; }

SamplingProfile evaluation_profile() {
  SamplingProfile p;
  p.top_p = 0.95;
  p.max_prompt_tokens = 8192;
  p.max_completion_tokens = 8192;
  return p;
}

GenerationRequest build_proposer_prompt(const KnowledgePiece* k, const SamplingProfile& profile,
                                        const TokenCounter& counter) {
  GenerationRequest req;
  req.system_prompt = std::string(prompts::kProposerSystem);
  if (k != nullptr) {
    req.user_prompt.reserve(k->text.size() + 512);
    req.user_prompt += prompts::kKnowledgePrefix;
    req.user_prompt += k->text;
    req.user_prompt += kBlockSeparator;
  }
  req.user_prompt += prompts::kProposerInstruction;
  fill_sampling(req, profile, counter);
  return req;
}

GenerationRequest build_solver_prompt(std::string_view question, const SamplingProfile& profile,
                                      const TokenCounter& counter) {
  if (question.empty()) throw std::invalid_argument("solver prompt needs a non-empty question");
  GenerationRequest req;
  req.system_prompt = std::string(prompts::kSolverSystem);
  req.user_prompt = std::string(question);
  fill_sampling(req, profile, counter);
  return req;
}

std::optional<std::string> knowledge_from_proposer_prompt(std::string_view user_prompt) {
  if (!user_prompt.starts_with(prompts::kKnowledgePrefix)) return std::nullopt;
  user_prompt.remove_prefix(prompts::kKnowledgePrefix.size());
  const std::string tail = std::string(kBlockSeparator) + std::string(prompts::kProposerInstruction);
  if (user_prompt.ends_with(tail)) user_prompt.remove_suffix(tail.size());
  return std::string(user_prompt);
}

std::vector<std::vector<std::string>> GenerationBackend::generate_all(
    std::span<const GenerationRequest> requests) {
  std::vector<std::vector<std::string>> out;
  out.reserve(requests.size());
  for (const auto& req : requests) out.push_back(generate(req));
  return out;
}

}  // namespace dualplay
