#include "dualplay/simulated.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace dualplay {
namespace {

constexpr std::array<std::string_view, 8> kTemplates = {
    "A {} ledger tracks three running tallies.",
    "Researchers studying {} combine three measured counts.",
    "A puzzle inspired by {} chains several quantities together.",
    "During a {} workshop, a facilitator writes numbers on the board.",
    "An engineer modeling {} needs one aggregate figure.",
    "A quiz about {} asks for a careful computation.",
    "In a {} inventory, batches are merged and scaled.",
    "A student reviewing {} checks an arithmetic identity.",
};

constexpr std::array<std::string_view, 4> kFallbackTopics = {"numbers", "patterns", "shapes",
                                                             "money"};

constexpr std::array<char, 3> kOps = {'+', '-', '*'};
constexpr std::array<int, 4> kOffsets = {-2, -1, 1, 2};

constexpr std::string_view kLevelTag = "[level ";
constexpr std::string_view kEvaluateTag = "Evaluate ";

long long apply(long long a, char op, long long b) {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    default: return a * b;
  }
}

long long evaluate(long long a, char op1, long long b, char op2, long long c) {
  // '*' binds tighter than '+' and '-'.
  if (op2 == '*' && op1 != '*') return apply(a, op1, b * c);
  return apply(apply(a, op1, b), op2, c);
}

std::vector<std::string> topic_words(const KnowledgePiece* k) {
  std::vector<std::string> words;
  if (k == nullptr) return words;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 4) words.push_back(current);
    current.clear();
  };
  for (char c : k->text) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc < 0x80 && std::isalpha(uc)) {
      current += static_cast<char>(std::tolower(uc));
    } else {
      flush();
    }
  }
  flush();
  return words;
}

std::string format_level(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", d);
  return buf;
}

std::string fill_template(std::string_view tmpl, std::string_view topic) {
  std::string out(tmpl);
  const auto pos = out.find("{}");
  out.replace(pos, 2, topic);
  return out;
}

}  // namespace

std::optional<SimulatedQuestion> parse_simulated_question(std::string_view text) {
  const auto level = text.find(kLevelTag);
  if (level == std::string_view::npos) return std::nullopt;
  const auto eval = text.find(kEvaluateTag, level);
  if (eval == std::string_view::npos) return std::nullopt;

  // Both tags are followed by plain ASCII numerals; copy so strtod/strtoll
  // see a terminated buffer.
  const std::string level_text(text.substr(level + kLevelTag.size(), 32));
  char* end = nullptr;
  const double d = std::strtod(level_text.c_str(), &end);
  if (end == level_text.c_str() || *end != ']') return std::nullopt;

  const std::string expr(text.substr(eval + kEvaluateTag.size(), 64));
  long long a = 0, b = 0, c = 0;
  char op1 = 0, op2 = 0;
  int consumed = 0;
  if (std::sscanf(expr.c_str(), "%lld %c %lld %c %lld%n", &a, &op1, &b, &op2, &c, &consumed) != 5) {
    return std::nullopt;
  }
  auto valid_op = [](char op) { return op == '+' || op == '-' || op == '*'; };
  if (!valid_op(op1) || !valid_op(op2)) return std::nullopt;
  return SimulatedQuestion{d, evaluate(a, op1, b, op2, c)};
}

std::vector<std::string> generate_simulated_proposer(const SimulatedAgentState& state,
                                                     const KnowledgePiece* k, Rng& rng,
                                                     std::size_t n,
                                                     const SimulatedProposerOptions& options) {
  const auto words = topic_words(k);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rng.normal(state.skill, options.difficulty_spread);
    const std::string topic = words.empty()
                                  ? std::string(kFallbackTopics[rng.uniform_index(kFallbackTopics.size())])
                                  : words[rng.uniform_index(words.size())];
    const auto tmpl = kTemplates[rng.uniform_index(kTemplates.size())];
    const long long a = 2 + static_cast<long long>(rng.uniform_index(98));
    const long long b = 2 + static_cast<long long>(rng.uniform_index(98));
    const long long c = 2 + static_cast<long long>(rng.uniform_index(98));
    const char op1 = kOps[rng.uniform_index(kOps.size())];
    const char op2 = kOps[rng.uniform_index(kOps.size())];
    const long long truth = evaluate(a, op1, b, op2, c);
    const std::string expr = std::to_string(a) + " " + op1 + " " + std::to_string(b) + " " + op2 +
                             " " + std::to_string(c);

    long long gold = truth;
    if (rng.bernoulli(options.wrong_answer_rate)) gold += kOffsets[rng.uniform_index(kOffsets.size())];

    const std::string question = std::string(kLevelTag) + format_level(d) + "] " +
                                 fill_template(tmpl, topic) + " " + std::string(kEvaluateTag) +
                                 expr + ".";
    const std::string reasoning = "Apply the order of operations to " + expr +
                                  ". Sanity check: each partial product was recomputed. ";
    const std::string g = std::to_string(gold);

    std::string completion;
    if (rng.bernoulli(options.format_error_rate)) {
      switch (rng.uniform_index(4)) {
        case 0:
          completion = "<problem>" + question + "</problem>\nThe answer is " + g + ".";
          break;
        case 1:
          completion = "<problem>" + question + "</problem>\n<answer>" + reasoning +
                       "The result is " + g + ".</answer>";
          break;
        case 2:
          completion = "<problem>" + question + "\n<answer>" + reasoning + "\\boxed{" + g +
                       "}</answer>";
          break;
        default:
          completion = "<problem>" + question + "</problem>\n<answer>" + reasoning +
                       "\\boxed{}</answer>";
          break;
      }
    } else {
      completion = "<problem>" + question + "</problem>\n<answer>" + reasoning + "\\boxed{" + g +
                   "}</answer>";
    }
    out.push_back(std::move(completion));
  }
  return out;
}

double solver_success_probability(double skill, double difficulty) {
  return 1.0 / (1.0 + std::exp(difficulty - skill));
}

std::vector<std::string> generate_simulated_solver(const SimulatedAgentState& state,
                                                   std::string_view question, Rng& rng,
                                                   std::size_t n, double format_error_rate) {
  std::vector<std::string> out;
  out.reserve(n);
  const auto parsed = parse_simulated_question(question);
  for (std::size_t i = 0; i < n; ++i) {
    if (!parsed) {
      out.emplace_back("I could not identify a well-posed computation in this problem.");
      continue;
    }
    const bool correct = rng.bernoulli(solver_success_probability(state.skill, parsed->difficulty));
    long long answer = parsed->truth;
    if (!correct) answer += kOffsets[rng.uniform_index(kOffsets.size())];
    if (rng.bernoulli(format_error_rate)) {
      out.push_back("Working through the expression, I get " + std::to_string(answer) + ".");
    } else {
      out.push_back("Working through the expression step by step, the value is \\boxed{" +
                    std::to_string(answer) + "}.");
    }
  }
  return out;
}

SimulatedAgentState update_skill(SimulatedAgentState state, double signal) {
  state.skill += state.learning_rate * signal;
  return state;
}

SimulatedAgentState update_proposer_skill(SimulatedAgentState state, const TrainingBatch& batch,
                                          double difficulty_spread) {
  double gradient = 0.0;
  std::size_t count = 0;
  for (const auto& group : batch.groups) {
    for (const auto& c : group.completions) {
      const auto level = c.text.find(kLevelTag);
      if (level == std::string::npos) continue;
      const std::string tail = c.text.substr(level + kLevelTag.size(), 32);
      char* end = nullptr;
      const double d = std::strtod(tail.c_str(), &end);
      if (end == tail.c_str()) continue;
      gradient += c.advantage * (d - state.skill);
      ++count;
    }
  }
  if (count == 0) return state;
  const double variance = difficulty_spread * difficulty_spread;
  state.skill += state.learning_rate * gradient / static_cast<double>(count) / variance;
  return state;
}

double expected_pass_rate(double skill, std::span<const double> difficulties) {
  if (difficulties.empty()) return 0.0;
  double total = 0.0;
  for (double d : difficulties) total += solver_success_probability(skill, d);
  return total / static_cast<double>(difficulties.size());
}

SimulatedProposer::SimulatedProposer(SimulatedAgentState state, SimulatedProposerOptions options,
                                     std::uint64_t seed)
    : state_(state), options_(options), rng_(mix_seed(seed, state.style_seed)) {}

std::vector<std::string> SimulatedProposer::generate(const GenerationRequest& req) {
  const auto knowledge = knowledge_from_proposer_prompt(req.user_prompt);
  if (!knowledge) return generate_simulated_proposer(state_, nullptr, rng_, req.n, options_);
  KnowledgePiece piece{0, *knowledge, 0};
  return generate_simulated_proposer(state_, &piece, rng_, req.n, options_);
}

void SimulatedProposer::train(const TrainingBatch& batch) {
  if (batch.role != Role::proposer) return;
  state_ = update_proposer_skill(state_, batch, options_.difficulty_spread);
}

std::optional<bool> SimulatedProposer::gold_correct(const QAPair& qa) const {
  if (!qa.format_ok) return std::nullopt;
  const auto parsed = parse_simulated_question(qa.question);
  if (!parsed) return std::nullopt;
  return answers_match(qa.gold_answer, std::to_string(parsed->truth));
}

SimulatedSolver::SimulatedSolver(SimulatedAgentState state, std::uint64_t seed,
                                 double format_error_rate)
    : state_(state), rng_(mix_seed(seed, state.style_seed)), format_error_rate_(format_error_rate) {}

std::vector<std::string> SimulatedSolver::generate(const GenerationRequest& req) {
  return generate_simulated_solver(state_, req.user_prompt, rng_, req.n, format_error_rate_);
}

void SimulatedSolver::train(const TrainingBatch& batch) {
  if (batch.role != Role::solver || batch.groups.empty()) return;
  // Within-group reward variance: a group the Solver always (or never)
  // solves carries no learning signal.
  double total = 0.0;
  for (const auto& g : batch.groups) {
    if (g.completions.empty()) continue;
    double mean = 0.0;
    for (const auto& c : g.completions) mean += c.reward;
    mean /= static_cast<double>(g.completions.size());
    double var = 0.0;
    for (const auto& c : g.completions) var += (c.reward - mean) * (c.reward - mean);
    total += var / static_cast<double>(g.completions.size());
  }
  state_ = update_skill(state_, total / static_cast<double>(batch.groups.size()));
}

}  // namespace dualplay
