#include "dualplay/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "dualplay/knowledge.hpp"

namespace dualplay {

using nlohmann::ordered_json;

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("EMA factor must lie in [0, 1]");
  }
}

}  // namespace

MetricSeries MetricSeries::from_raw(std::string name, std::vector<std::optional<double>> raw,
                                    double alpha) {
  check_alpha(alpha);
  MetricSeries s{std::move(name), std::move(raw), {}};
  s.ema.reserve(s.raw.size());
  std::optional<double> current;
  for (const auto& v : s.raw) {
    if (v) current = current ? alpha * *current + (1.0 - alpha) * *v : *v;
    s.ema.push_back(current);
  }
  return s;
}

std::vector<double> exponential_moving_average(std::span<const double> raw, double alpha) {
  check_alpha(alpha);
  std::vector<double> out;
  out.reserve(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) {
    out.push_back(t == 0 ? raw[0] : alpha * out.back() + (1.0 - alpha) * raw[t]);
  }
  return out;
}

double sampling_efficiency(std::span<const StepReport> window) {
  std::size_t generated = 0;
  std::size_t retained = 0;
  for (const auto& r : window) {
    generated += r.counts.generated;
    retained += r.counts.retained;
  }
  if (generated == 0) return 0.0;
  return static_cast<double>(retained) / static_cast<double>(generated);
}

std::vector<SweepRecord> sweep_records(std::span<const StepReport> reports) {
  std::vector<SweepRecord> out;
  for (const auto& r : reports) {
    if (r.phase == StepPhase::solver) continue;
    for (const auto& q : r.questions) {
      if (!q.format_ok || !q.passing_rate) continue;
      SweepRecord rec;
      rec.step = r.step;
      rec.index = q.index;
      rec.attempts = q.attempt_rewards.size();
      rec.correct_attempts = static_cast<std::size_t>(
          std::count(q.attempt_rewards.begin(), q.attempt_rewards.end(), 1.0));
      rec.gold_correct = q.gold_correct;
      out.push_back(rec);
    }
  }
  return out;
}

void apply_judge_verdicts(std::vector<SweepRecord>& records, std::istream& verdicts) {
  std::map<std::pair<std::uint64_t, std::size_t>, bool> lookup;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(verdicts, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = ordered_json::parse(line);
      lookup[{j.at("step").get<std::uint64_t>(), j.at("index").get<std::size_t>()}] =
          j.at("correct").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("judge verdict line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (auto& rec : records) {
    if (auto it = lookup.find({rec.step, rec.index}); it != lookup.end()) {
      rec.gold_correct = it->second;
    }
  }
}

std::vector<SweepPoint> sweep_tau_low(std::span<const SweepRecord> records, std::size_t attempts,
                                      std::span<const double> thresholds) {
  if (attempts == 0) throw std::invalid_argument("sweep needs J >= 1");
  for (const auto& rec : records) {
    if (rec.attempts != attempts || rec.correct_attempts > attempts) {
      throw std::invalid_argument("sweep record at step " + std::to_string(rec.step) + " has " +
                                  std::to_string(rec.attempts) + " attempts, expected " +
                                  std::to_string(attempts));
    }
  }
  const bool labelled =
      !records.empty() &&
      std::all_of(records.begin(), records.end(), [](const auto& r) { return r.gold_correct; });

  std::vector<SweepPoint> out;
  for (double tau : thresholds) {
    SweepPoint point;
    point.tau = tau;
    std::size_t good = 0;
    for (const auto& rec : records) {
      // p >= tau with p = c / J, compared on the count scale so 2/6 >= 2/6.
      if (static_cast<double>(rec.correct_attempts) + 1e-9 >= tau * static_cast<double>(attempts)) {
        ++point.retained;
        if (labelled && *rec.gold_correct) ++good;
      }
    }
    if (!records.empty()) {
      point.retention = static_cast<double>(point.retained) / static_cast<double>(records.size());
    }
    if (labelled && point.retained > 0) {
      point.quality = static_cast<double>(good) / static_cast<double>(point.retained);
    }
    out.push_back(point);
  }
  return out;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double rouge_l_prefix_probe(std::string_view q_old, std::string_view q_new) {
  const auto ref = whitespace_tokens(q_old);
  const auto cand = whitespace_tokens(q_new);
  if (cand.empty()) return 0.0;
  return static_cast<double>(lcs_length(ref, cand)) / static_cast<double>(cand.size());
}

int exact_match(std::string_view q_old, std::string_view q_new) {
  return whitespace_tokens(q_old) == whitespace_tokens(q_new) ? 1 : 0;
}

std::string question_prefix(std::string_view question, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("prefix ratio must lie in [0, 1]");
  const auto tokens = whitespace_tokens(question);
  const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(tokens.size()) - 1e-9));
  std::string out;
  for (std::size_t i = 0; i < n && i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (value == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

MetricsTable build_metrics(std::span<const StepReport> reports, double alpha) {
  check_alpha(alpha);
  MetricsTable t;
  std::set<std::string> extra_keys;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.extra) extra_keys.insert(k);
  }

  struct Column {
    std::string name;
    std::function<std::optional<double>(const StepReport&)> get;
    bool smoothed;
  };
  auto count = [](std::size_t StepCounts::*field) {
    return [field](const StepReport& r) -> std::optional<double> {
      return static_cast<double>(r.counts.*field);
    };
  };
  std::vector<Column> cols = {
      {"generated", count(&StepCounts::generated), false},
      {"format_valid", count(&StepCounts::format_valid), false},
      {"reward_valid", count(&StepCounts::reward_valid), false},
      {"retained", count(&StepCounts::retained), false},
      {"replayed", count(&StepCounts::replayed), false},
      {"evicted", count(&StepCounts::evicted), false},
      {"history_size", [](const StepReport& r) -> std::optional<double> { return static_cast<double>(r.history_size); }, false},
      {"buffer_size", [](const StepReport& r) -> std::optional<double> { return static_cast<double>(r.buffer_size); }, false},
      {"sampling_efficiency",
       [](const StepReport& r) -> std::optional<double> {
         if (r.phase == StepPhase::solver || r.status == StepStatus::failed) return std::nullopt;
         return sampling_efficiency(std::span<const StepReport>(&r, 1));
       },
       true},
      {"proposer_reward_mean",
       [](const StepReport& r) -> std::optional<double> {
         if (!r.proposer_reward) return std::nullopt;
         return r.proposer_reward->mean;
       },
       true},
      {"proposer_reward_std",
       [](const StepReport& r) -> std::optional<double> {
         if (!r.proposer_reward) return std::nullopt;
         return r.proposer_reward->std;
       },
       false},
      {"solver_reward_mean",
       [](const StepReport& r) -> std::optional<double> {
         if (!r.solver_reward) return std::nullopt;
         return r.solver_reward->mean;
       },
       true},
      {"solver_reward_std",
       [](const StepReport& r) -> std::optional<double> {
         if (!r.solver_reward) return std::nullopt;
         return r.solver_reward->std;
       },
       false},
      {"passing_rate_mean",
       [](const StepReport& r) -> std::optional<double> {
         double sum = 0.0;
         std::size_t n = 0;
         for (const auto& q : r.questions) {
           if (q.passing_rate) {
             sum += *q.passing_rate;
             ++n;
           }
         }
         if (n == 0) return std::nullopt;
         return sum / static_cast<double>(n);
       },
       true},
  };
  for (const auto& key : extra_keys) {
    cols.push_back({key,
                    [key](const StepReport& r) -> std::optional<double> {
                      if (auto it = r.extra.find(key); it != r.extra.end()) return it->second;
                      return std::nullopt;
                    },
                    true});
  }

  std::vector<MetricSeries> series;
  for (const auto& c : cols) {
    std::vector<std::optional<double>> raw;
    raw.reserve(reports.size());
    for (const auto& r : reports) raw.push_back(c.get(r));
    series.push_back(MetricSeries::from_raw(c.name, std::move(raw), alpha));
    t.numeric_columns.push_back(c.name);
  }
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].smoothed) t.numeric_columns.push_back(cols[i].name + "_ema");
  }

  t.columns = {"step", "iteration", "phase", "status"};
  t.columns.insert(t.columns.end(), t.numeric_columns.begin(), t.numeric_columns.end());

  for (std::size_t row = 0; row < reports.size(); ++row) {
    const auto& r = reports[row];
    t.steps.push_back(r.step);
    t.iterations.push_back(r.iteration);
    t.labels.emplace_back(std::string(to_string(r.phase)), std::string(to_string(r.status)));
    std::vector<std::optional<double>> values;
    for (const auto& s : series) values.push_back(s.raw[row]);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i].smoothed) values.push_back(series[i].ema[row]);
    }
    t.numeric.push_back(std::move(values));
  }
  return t;
}

void write_metrics_csv(const MetricsTable& t, std::ostream& out) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (std::size_t row = 0; row < t.numeric.size(); ++row) {
    out << t.steps[row] << ',' << t.iterations[row] << ',' << t.labels[row].first << ','
        << t.labels[row].second;
    for (const auto& v : t.numeric[row]) {
      out << ',';
      if (v) out << format_double(*v);
    }
    out << '\n';
  }
}

void write_metrics_jsonl(const MetricsTable& t, std::ostream& out) {
  for (std::size_t row = 0; row < t.numeric.size(); ++row) {
    // Hand-formatted so numbers match the CSV byte for byte.
    out << "{\"step\":" << t.steps[row] << ",\"iteration\":" << t.iterations[row]
        << ",\"phase\":\"" << t.labels[row].first << "\",\"status\":\"" << t.labels[row].second
        << '"';
    for (std::size_t i = 0; i < t.numeric_columns.size(); ++i) {
      out << ",\"" << t.numeric_columns[i] << "\":";
      const auto& v = t.numeric[row][i];
      out << (v && std::isfinite(*v) ? format_double(*v) : "null");
    }
    out << "}\n";
  }
}

std::vector<StepReport> read_reports(std::istream& in) {
  std::vector<StepReport> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(report_from_json(ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("report line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw IoError("report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<StepReport> read_reports_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report file " + path.string());
  return read_reports(in);
}

void write_report(const StepReport& report, std::ostream& out) {
  out << to_json(report).dump() << '\n';
}

}  // namespace dualplay
