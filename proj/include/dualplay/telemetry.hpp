#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dualplay/orchestrator.hpp"

namespace dualplay {

inline constexpr double kDefaultEmaFactor = 0.9;

/// ema_0 = raw_0, ema_t = alpha * ema_{t-1} + (1 - alpha) * raw_t. Missing
/// raw values leave the average unchanged (and stay missing in `ema`
/// until the first present value).
struct MetricSeries {
  std::string name;
  std::vector<std::optional<double>> raw;
  std::vector<std::optional<double>> ema;

  static MetricSeries from_raw(std::string name, std::vector<std::optional<double>> raw,
                               double alpha = kDefaultEmaFactor);
};

std::vector<double> exponential_moving_average(std::span<const double> raw,
                                               double alpha = kDefaultEmaFactor);

/// Total retained / total generated over the window (0 when nothing was
/// generated).
double sampling_efficiency(std::span<const StepReport> window);

// ---------------------------------------------------------------------------
// Quantity/quality sweep over the passing-rate threshold.

struct SweepRecord {
  std::uint64_t step = 0;
  std::size_t index = 0;
  std::size_t correct_attempts = 0;
  std::size_t attempts = 0;
  std::optional<bool> gold_correct;
};

struct SweepPoint {
  double tau = 0.0;
  std::size_t retained = 0;
  double retention = 0.0;
  std::optional<double> quality;  // absent without correctness labels
};

/// Format-valid questions from Proposer-side reports.
std::vector<SweepRecord> sweep_records(std::span<const StepReport> reports);

/// Judge verdicts, JSONL {step, index, correct}; overrides gold_correct.
void apply_judge_verdicts(std::vector<SweepRecord>& records, std::istream& verdicts);

/// Retains questions with p >= tau. Records whose attempt count differs from
/// J are rejected with std::invalid_argument.
std::vector<SweepPoint> sweep_tau_low(std::span<const SweepRecord> records, std::size_t attempts,
                                      std::span<const double> thresholds);

// ---------------------------------------------------------------------------
// Prefix-completion memorization probe.

std::vector<std::string> whitespace_tokens(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// |LCS(old, new)| / |new| over whitespace tokens; 0 for an empty q_new.
double rouge_l_prefix_probe(std::string_view q_old, std::string_view q_new);

/// 1 iff the token sequences are identical.
int exact_match(std::string_view q_old, std::string_view q_new);

/// First ceil(ratio * n) whitespace tokens joined by single spaces.
std::string question_prefix(std::string_view question, double ratio);

// ---------------------------------------------------------------------------
// Metric export.

/// Columns in output order; see README for their meaning.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> numeric;  // per row, aligned with numeric columns
  std::vector<std::string> numeric_columns;
  std::vector<std::pair<std::string, std::string>> labels;  // per row: phase, status
  std::vector<std::uint64_t> steps;
  std::vector<std::uint64_t> iterations;
};

MetricsTable build_metrics(std::span<const StepReport> reports, double alpha = kDefaultEmaFactor);
void write_metrics_csv(const MetricsTable& table, std::ostream& out);
void write_metrics_jsonl(const MetricsTable& table, std::ostream& out);

/// Shortest round-trip decimal form.
std::string format_double(double value);

std::vector<StepReport> read_reports(std::istream& in);
std::vector<StepReport> read_reports_file(const std::filesystem::path& path);
void write_report(const StepReport& report, std::ostream& out);

}  // namespace dualplay
