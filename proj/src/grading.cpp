#include "dualplay/grading.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

namespace dualplay {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!is_digit(c)) return false;
  }
  return true;
}

// Returns one past the closing brace of a group whose body starts at `body`,
// or npos when the braces never balance.
std::size_t match_braces(std::string_view text, std::size_t body) {
  int depth = 1;
  for (std::size_t i = body; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' && i + 1 < text.size() && (text[i + 1] == '{' || text[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::vector<std::string_view> balanced_boxed(std::string_view text, std::string_view marker) {
  std::vector<std::string_view> found;
  if (marker.empty()) return found;
  std::size_t pos = text.find(marker);
  while (pos != std::string_view::npos) {
    const std::size_t body = pos + marker.size();
    const std::size_t end = match_braces(text, body);
    if (end != std::string_view::npos) found.push_back(text.substr(body, end - 1 - body));
    pos = text.find(marker, pos + 1);
  }
  return found;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

struct SignedDigits {
  bool negative = false;
  std::string_view digits;
};

std::optional<SignedDigits> split_sign(std::string_view s) {
  SignedDigits out;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    out.negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) return std::nullopt;
  out.digits = s;
  return out;
}

std::optional<long long> to_integer(const SignedDigits& d) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(d.digits.data(), d.digits.data() + d.digits.size(), value);
  if (ec != std::errc() || ptr != d.digits.data() + d.digits.size()) return std::nullopt;
  return d.negative ? -value : value;
}

// [+-]digits '.' digits with at least one digit on either side.
bool is_decimal(std::string_view s) {
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) s.remove_prefix(1);
  const auto dot = s.find('.');
  if (dot == std::string_view::npos || s.find('.', dot + 1) != std::string_view::npos) return false;
  const auto whole = s.substr(0, dot);
  const auto frac = s.substr(dot + 1);
  if (whole.empty() && frac.empty()) return false;
  return (whole.empty() || all_digits(whole)) && (frac.empty() || all_digits(frac));
}

struct Fraction {
  bool negative = false;  // sign written outside \frac
  std::string_view numerator;
  std::string_view denominator;
};

std::optional<Fraction> split_fraction(std::string_view s) {
  const auto slash = s.find('/');
  if (slash != std::string_view::npos) {
    if (s.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
    return Fraction{false, trim(s.substr(0, slash)), trim(s.substr(slash + 1))};
  }
  // [+-]\frac{a}{b}, also \dfrac and \tfrac.
  Fraction out;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    out.negative = s.front() == '-';
    s.remove_prefix(1);
  }
  for (std::string_view head : {"\\frac{", "\\dfrac{", "\\tfrac{"}) {
    if (!s.starts_with(head)) continue;
    const std::size_t num_end = match_braces(s, head.size());
    if (num_end == std::string_view::npos || num_end >= s.size() || s[num_end] != '{') {
      return std::nullopt;
    }
    const std::size_t den_end = match_braces(s, num_end + 1);
    if (den_end != s.size()) return std::nullopt;
    out.numerator = trim(s.substr(head.size(), num_end - 1 - head.size()));
    out.denominator = trim(s.substr(num_end + 1, den_end - 2 - num_end));
    return out;
  }
  return std::nullopt;
}

std::string canonical_numeric(std::string s) {
  if (split_sign(s)) return s;  // integers are left as written

  if (is_decimal(s)) {
    const auto dot = s.find('.');
    std::size_t end = s.size();
    while (end > dot + 1 && s[end - 1] == '0') --end;
    if (end == dot + 1) --end;
    s.resize(end);
    if (s.empty() || s == "-" || s == "+") s += "0";
    return s;
  }

  if (auto frac = split_fraction(s)) {
    const auto num_sd = split_sign(frac->numerator);
    const auto den_sd = split_sign(frac->denominator);
    if (!num_sd || !den_sd) return s;
    auto num = to_integer(*num_sd);
    auto den = to_integer(*den_sd);
    if (!num || !den || *den == 0) return s;
    if (frac->negative) *num = -*num;
    if (*den < 0) {
      *num = -*num;
      *den = -*den;
    }
    const long long g = std::gcd(*num, *den);
    if (g > 1) {
      *num /= g;
      *den /= g;
    }
    if (*den == 1) return std::to_string(*num);
    return std::to_string(*num) + "/" + std::to_string(*den);
  }
  return s;
}

std::string normalize_once(std::string_view raw) {
  std::string s(trim(raw));

  // Enclosing dollar signs, possibly doubled.
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = std::string(trim(std::string_view(s).substr(1, s.size() - 2)));
  }
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");

  std::string collapsed;
  collapsed.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !collapsed.empty()) collapsed += ' ';
    pending_space = false;
    collapsed += c;
  }
  s = std::move(collapsed);

  while (!s.empty()) {
    const char c = s.back();
    if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?') {
      s.pop_back();
    } else if (is_space(c)) {
      s.pop_back();
    } else {
      break;
    }
  }
  return canonical_numeric(std::move(s));
}

}  // namespace

std::optional<std::string> extract_boxed_answer(std::string_view completion,
                                                std::string_view marker) {
  auto found = balanced_boxed(completion, marker);
  if (found.empty()) return std::nullopt;
  return std::string(found.back());
}

std::size_t count_boxed_answers(std::string_view text, std::string_view marker) {
  return balanced_boxed(text, marker).size();
}

QAPair extract_qa_pair(std::string_view completion, std::optional<KnowledgeId> knowledge_id,
                       const FormatTags& tags) {
  QAPair qa;
  qa.raw_completion = std::string(completion);
  qa.knowledge_id = knowledge_id;

  const auto p_open = completion.find(tags.problem_open);
  if (p_open == std::string_view::npos) return qa;
  const auto q_begin = p_open + tags.problem_open.size();
  const auto p_close = completion.find(tags.problem_close, q_begin);
  if (p_close == std::string_view::npos) return qa;
  qa.question = std::string(trim(completion.substr(q_begin, p_close - q_begin)));

  const auto a_open = completion.find(tags.answer_open);
  if (a_open == std::string_view::npos) return qa;
  const auto a_begin = a_open + tags.answer_open.size();
  const auto a_close = completion.find(tags.answer_close, a_begin);
  if (a_close == std::string_view::npos) return qa;
  const auto section = completion.substr(a_begin, a_close - a_begin);

  const auto boxed = balanced_boxed(section, tags.boxed_marker);
  if (boxed.size() != 1) return qa;
  qa.gold_answer = normalize_answer(boxed.front());
  qa.format_ok = !qa.question.empty() && !qa.gold_answer.empty();
  return qa;
}

std::string normalize_answer(std::string_view raw) {
  std::string current = normalize_once(raw);
  // Each stage can expose work for an earlier one ("$5$." -> "$5$").
  for (int round = 0; round < 16; ++round) {
    std::string next = normalize_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::optional<double> parse_numeric_answer(std::string_view answer) {
  const std::string s = normalize_answer(answer);
  auto parse_double = [](std::string_view text) -> std::optional<double> {
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    if (!split_sign(text) && !is_decimal(text)) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
      return std::nullopt;
    }
    return value;
  };
  if (auto v = parse_double(s)) return v;
  const auto slash = s.find('/');
  if (slash != std::string::npos) {
    auto num = parse_double(std::string_view(s).substr(0, slash));
    auto den = parse_double(std::string_view(s).substr(slash + 1));
    if (num && den && *den != 0.0) {
      const double v = *num / *den;
      if (std::isfinite(v)) return v;
    }
  }
  return std::nullopt;
}

bool answers_match(std::string_view a, std::string_view b) {
  if (normalize_answer(a) == normalize_answer(b)) return true;
  const auto x = parse_numeric_answer(a);
  const auto y = parse_numeric_answer(b);
  if (!x || !y) return false;
  const double scale = std::max(std::fabs(*x), std::fabs(*y));
  return std::fabs(*x - *y) <= 1e-9 * scale;
}

SolveAttempt grade_attempt(std::string completion, const QAPair& qa, const FormatTags& tags) {
  SolveAttempt attempt;
  if (auto boxed = extract_boxed_answer(completion, tags.boxed_marker)) {
    auto normalized = normalize_answer(*boxed);
    if (!normalized.empty()) attempt.extracted_answer = std::move(normalized);
  }
  attempt.format_ok = attempt.extracted_answer.has_value();
  attempt.matched = attempt.format_ok && qa.format_ok &&
                    answers_match(*attempt.extracted_answer, qa.gold_answer);
  attempt.reward = attempt.matched ? 1.0 : 0.0;
  attempt.completion = std::move(completion);
  return attempt;
}

}  // namespace dualplay
