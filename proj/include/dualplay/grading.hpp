#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dualplay {

using KnowledgeId = std::uint64_t;

/// Markers used to parse Proposer and Solver completions.
struct FormatTags {
  std::string problem_open = "<problem>";
  std::string problem_close = "</problem>";
  std::string answer_open = "<answer>";
  std::string answer_close = "</answer>";
  std::string boxed_marker = "\\boxed{";
};

struct QAPair {
  std::string question;
  std::string gold_answer;  // normalized
  std::string raw_completion;
  std::optional<KnowledgeId> knowledge_id;
  bool format_ok = false;
};

struct SolveAttempt {
  std::string completion;
  std::optional<std::string> extracted_answer;  // normalized
  bool format_ok = false;
  bool matched = false;
  double reward = 0.0;
};

/// Content of the last \boxed{...} whose braces balance. Backslash-escaped
/// braces do not count toward nesting.
std::optional<std::string> extract_boxed_answer(std::string_view completion,
                                                std::string_view marker = "\\boxed{");

/// Number of balanced boxed values in text.
std::size_t count_boxed_answers(std::string_view text, std::string_view marker = "\\boxed{");

/// Parses a Proposer completion. Never throws; failures set format_ok = false.
QAPair extract_qa_pair(std::string_view completion, std::optional<KnowledgeId> knowledge_id,
                       const FormatTags& tags = {});

/// Canonical form used for equality: trimmed, $ and \left/\right stripped,
/// whitespace collapsed, trailing punctuation dropped, simple numerics
/// canonicalized (decimal zeros trimmed, integer fractions reduced).
std::string normalize_answer(std::string_view raw);

/// Numeric value of an integer, decimal, a/b or \frac{a}{b} answer.
std::optional<double> parse_numeric_answer(std::string_view answer);

/// Normalized string equality, or numeric equality within 1e-9 relative.
bool answers_match(std::string_view a, std::string_view b);

/// Grades one Solver completion against the pair's gold answer.
SolveAttempt grade_attempt(std::string completion, const QAPair& qa, const FormatTags& tags = {});

}  // namespace dualplay
