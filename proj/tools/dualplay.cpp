// dualplay: command-line entry points for ingestion, training runs, the
// closed-loop simulator and the transcript analyses.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualplay/config.hpp"
#include "dualplay/knowledge.hpp"
#include "dualplay/orchestrator.hpp"
#include "dualplay/remote.hpp"
#include "dualplay/simulation.hpp"
#include "dualplay/sink.hpp"
#include "dualplay/telemetry.hpp"

namespace {

using namespace dualplay;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2 };

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> proposer_steps;
  std::optional<std::size_t> solver_steps;
  std::optional<std::size_t> generations;
  std::optional<std::size_t> attempts;
  std::optional<std::string> reward_mode;
  bool frozen_proposer = false;
  bool without_knowledge = false;
  bool without_diversity = false;
  bool eviction = false;
  bool simulate = false;
  std::optional<std::string> knowledge;
  std::optional<std::string> sink_file;
  std::optional<std::string> sink_url;
  std::optional<std::string> reports;
  std::optional<std::string> metrics_csv;
  std::optional<std::string> metrics_jsonl;
  std::optional<double> ema;
  std::optional<double> wrong_answer_rate;
  std::optional<double> format_error_rate;
  std::optional<std::string> proposer_url;
  std::optional<std::string> solver_url;
  std::optional<std::string> model;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool simulate_command) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--steps", f.steps, "Online steps T");
  cmd->add_option("--iterations", f.iterations, "Offline iterations");
  cmd->add_option("--proposer-steps", f.proposer_steps, "Offline Proposer steps per iteration T_P");
  cmd->add_option("--solver-steps", f.solver_steps, "Offline Solver steps per iteration T_S");
  cmd->add_option("--generations", f.generations, "Proposer completions per prompt I");
  cmd->add_option("--attempts", f.attempts, "Solver attempts per question J");
  cmd->add_option("--reward-mode", f.reward_mode, "normal | full_random | partial_random");
  cmd->add_flag("--frozen-proposer", f.frozen_proposer, "Never update the Proposer");
  cmd->add_flag("--without-knowledge", f.without_knowledge, "Prompt without knowledge pieces");
  cmd->add_flag("--without-diversity", f.without_diversity, "Drop the diversity term and clip");
  cmd->add_flag("--eviction", f.eviction, "Enable question-buffer eviction (offline)");
  cmd->add_option("--knowledge", f.knowledge, "Knowledge store written by `ingest`");
  cmd->add_option("--sink-file", f.sink_file, "Write training batches to this JSONL file, replacing it");
  cmd->add_option("--sink-url", f.sink_url, "POST training batches to this base URL");
  cmd->add_option("--reports", f.reports, "Write step reports (JSONL)");
  cmd->add_option("--metrics-csv", f.metrics_csv, "Write the metrics table as CSV");
  cmd->add_option("--metrics-jsonl", f.metrics_jsonl, "Write the metrics table as JSONL");
  cmd->add_option("--ema", f.ema, "EMA factor for exported metrics");
  cmd->add_option("--wrong-answer-rate", f.wrong_answer_rate, "Simulated Proposer gold error rate");
  cmd->add_option("--format-error-rate", f.format_error_rate, "Simulated Proposer format error rate");
  if (!simulate_command) {
    cmd->add_flag("--simulate", f.simulate, "Use simulated agents instead of endpoints");
    cmd->add_option("--proposer-url", f.proposer_url, "Proposer endpoint base URL");
    cmd->add_option("--solver-url", f.solver_url, "Solver endpoint base URL");
    cmd->add_option("--model", f.model, "Model name sent to both endpoints");
  }
}

AppConfig resolve(const RunFlags& f) {
  AppConfig c = f.config.empty() ? AppConfig{} : load_config(f.config);
  if (f.seed) c.run.seed = *f.seed;
  if (f.steps) c.run.max_steps = *f.steps;
  if (f.iterations) c.run.max_iterations = *f.iterations;
  if (f.proposer_steps) c.run.proposer_steps = *f.proposer_steps;
  if (f.solver_steps) c.run.solver_steps = *f.solver_steps;
  if (f.generations) c.run.proposer_generations = *f.generations;
  if (f.attempts) c.run.solver_attempts = *f.attempts;
  if (f.reward_mode) c.run.reward_mode = parse_reward_mode(*f.reward_mode);
  if (f.frozen_proposer) c.run.frozen_proposer = true;
  if (f.without_knowledge) c.run.without_knowledge = true;
  if (f.without_diversity) c.run.without_diversity = true;
  if (f.eviction) c.run.eviction.enabled = true;
  if (f.simulate) c.simulate = true;
  if (f.knowledge) c.knowledge.store = *f.knowledge;
  if (f.sink_file) {
    c.sink.kind = "file";
    c.sink.path = *f.sink_file;
  }
  if (f.sink_url) {
    c.sink.kind = "http";
    c.sink.http.base_url = *f.sink_url;
  }
  if (f.reports) c.output.reports = *f.reports;
  if (f.metrics_csv) c.output.metrics_csv = *f.metrics_csv;
  if (f.metrics_jsonl) c.output.metrics_jsonl = *f.metrics_jsonl;
  if (f.ema) c.output.ema = *f.ema;
  if (f.wrong_answer_rate) c.simulation.proposer.wrong_answer_rate = *f.wrong_answer_rate;
  if (f.format_error_rate) c.simulation.proposer.format_error_rate = *f.format_error_rate;
  auto endpoint = [&](std::optional<EndpointConfig>& e, const std::optional<std::string>& url) {
    if (url) {
      if (!e) e.emplace();
      e->base_url = *url;
    }
    if (e && f.model) e->model = *f.model;
  };
  endpoint(c.proposer_endpoint, f.proposer_url);
  endpoint(c.solver_endpoint, f.solver_url);
  return c;
}

std::unique_ptr<BatchSink> open_sink(const SinkConfig& s) {
  if (s.kind == "file") {
    if (s.path.empty()) throw ConfigError("file sink needs sink.path");
    return std::make_unique<FileSink>(s.path, true);
  }
  if (s.kind == "http") return std::make_unique<HttpSink>(s.http);
  return std::make_unique<NullSink>();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void export_metrics(const std::vector<StepReport>& reports, const OutputConfig& o) {
  if (o.metrics_csv.empty() && o.metrics_jsonl.empty()) return;
  const auto table = build_metrics(reports, o.ema);
  if (!o.metrics_csv.empty()) {
    auto out = open_output(o.metrics_csv);
    write_metrics_csv(table, out);
  }
  if (!o.metrics_jsonl.empty()) {
    auto out = open_output(o.metrics_jsonl);
    write_metrics_jsonl(table, out);
  }
}

int execute_run(AppConfig c) {
  c.run.validate();
  c.reward.validate();
  if (!c.simulate && (!c.proposer_endpoint || !c.solver_endpoint)) {
    throw ConfigError("no proposer_endpoint/solver_endpoint configured; pass --simulate for simulated agents");
  }

  std::optional<KnowledgeStore> store;
  if (!c.knowledge.store.empty()) {
    store = KnowledgeStore::load_file(c.knowledge.store, c.knowledge.max_tokens);
  } else if (!c.simulate && !c.run.without_knowledge) {
    throw ConfigError("knowledge.store is required unless --without-knowledge is set");
  }

  auto sink = open_sink(c.sink);
  std::optional<std::ofstream> reports_out;
  if (!c.output.reports.empty()) reports_out = open_output(c.output.reports);

  std::vector<StepReport> reports;
  auto observe = [&](const StepReport& r) {
    reports.push_back(r);
    if (reports_out) write_report(r, *reports_out);
    if (r.status == StepStatus::failed) {
      std::cerr << "step " << r.step << " failed: " << r.error << '\n';
    }
  };

  const KnowledgeStore* knowledge = store ? &*store : nullptr;
  if (c.simulate) {
    run_simulation(c.run, c.reward, c.simulation, *sink, knowledge, observe);
  } else {
    auto proposer = RemoteBackend::from_config(*c.proposer_endpoint);
    auto solver = RemoteBackend::from_config(*c.solver_endpoint);
    Orchestrator orchestrator(c.run, c.reward, knowledge, *proposer, *solver, *sink);
    orchestrator.run(observe);
  }
  export_metrics(reports, c.output);

  std::size_t failed = 0;
  for (const auto& r : reports) failed += r.status == StepStatus::failed;
  std::printf("steps %zu  failed %zu  sampling_efficiency %s", reports.size(), failed,
              format_double(sampling_efficiency(reports)).c_str());
  if (!reports.empty()) {
    if (auto it = reports.back().extra.find("heldout_pass_rate"); it != reports.back().extra.end()) {
      std::printf("  heldout_pass_rate %s", format_double(it->second).c_str());
    }
  }
  std::printf("\n");
  return kOk;
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto slash = item.find('/');
    try {
      if (slash == std::string::npos) {
        out.push_back(std::stod(item));
      } else {
        out.push_back(std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1)));
      }
    } catch (const std::exception&) {
      throw ConfigError("bad threshold \"" + item + "\"");
    }
  }
  if (out.empty()) throw ConfigError("no thresholds given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proposer/Solver dual-play training orchestrator"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_config, ingest_input, ingest_output;
  std::optional<std::size_t> ingest_max_tokens;
  auto* ingest = app.add_subcommand("ingest", "Build a knowledge store from a JSONL corpus");
  ingest->add_option("--config", ingest_config, "JSON config file");
  ingest->add_option("--input", ingest_input, "Corpus JSONL with a \"text\" field")->required();
  ingest->add_option("--output", ingest_output, "Knowledge store path")->required();
  ingest->add_option("--max-tokens", ingest_max_tokens, "Admission limit in tokens");

  RunFlags online_flags, offline_flags, sim_flags;
  auto* online = app.add_subcommand("run-online", "Online dual-play training");
  add_run_flags(online, online_flags, false);
  auto* offline = app.add_subcommand("run-offline", "Offline dual-play training with a question buffer");
  add_run_flags(offline, offline_flags, false);
  auto* simulate = app.add_subcommand("simulate", "Closed-loop run with simulated agents");
  std::string sim_mode = "online";
  add_run_flags(simulate, sim_flags, true);
  simulate->add_option("--mode", sim_mode, "online | offline")->check(CLI::IsMember({"online", "offline"}));

  // sweep-tau
  std::string sweep_config, sweep_reports, sweep_judge, sweep_output, sweep_thresholds = "0,1/6,2/6,3/6";
  std::optional<std::size_t> sweep_attempts;
  auto* sweep = app.add_subcommand("sweep-tau", "Retention/quality trade-off over the passing-rate threshold");
  sweep->add_option("--config", sweep_config, "JSON config file");
  sweep->add_option("--reports", sweep_reports, "Step reports (JSONL)")->required();
  sweep->add_option("--attempts", sweep_attempts, "Solver attempts per question J");
  sweep->add_option("--thresholds", sweep_thresholds, "Comma list, fractions allowed (e.g. 0,1/6,2/6)");
  sweep->add_option("--judge", sweep_judge, "Judge verdicts JSONL {step, index, correct}");
  sweep->add_option("--output", sweep_output, "Write the sweep table as CSV (default stdout)");

  // probe-memorization
  std::string probe_config, probe_pairs, probe_questions, probe_output, probe_ratios = "0.4,0.6,0.8";
  auto* probe = app.add_subcommand("probe-memorization", "ROUGE-L and exact match of continuations");
  probe->add_option("--config", probe_config, "JSON config file");
  auto* pairs_opt = probe->add_option("--pairs", probe_pairs, "JSONL {q_old, q_new} pairs to score");
  auto* questions_opt =
      probe->add_option("--questions", probe_questions, "JSONL {question} lines to cut into prefixes");
  pairs_opt->excludes(questions_opt);
  probe->add_option("--ratios", probe_ratios, "Prefix ratios for --questions");
  probe->add_option("--output", probe_output, "Output JSONL (default stdout)");

  // export-metrics
  std::string export_config, export_reports, export_csv, export_jsonl;
  std::optional<double> export_ema;
  auto* exp = app.add_subcommand("export-metrics", "Metrics table (raw and EMA) from step reports");
  exp->add_option("--config", export_config, "JSON config file");
  exp->add_option("--reports", export_reports, "Step reports (JSONL)")->required();
  exp->add_option("--csv", export_csv, "CSV output path (default stdout)");
  exp->add_option("--jsonl", export_jsonl, "JSONL output path");
  exp->add_option("--ema", export_ema, "EMA factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*ingest) {
      IngestOptions options;
      if (!ingest_config.empty()) options.max_tokens = load_config(ingest_config).knowledge.max_tokens;
      if (ingest_max_tokens) options.max_tokens = *ingest_max_tokens;
      IngestSummary summary;
      const auto store = KnowledgeStore::ingest_file(ingest_input, options, &summary);
      for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
      store.save_file(ingest_output);
      std::printf("admitted %zu  rejected %zu\n", summary.admitted, summary.rejected);
      return kOk;
    }
    if (*online) {
      auto c = resolve(online_flags);
      c.run.mode = RunMode::online;
      return execute_run(std::move(c));
    }
    if (*offline) {
      auto c = resolve(offline_flags);
      c.run.mode = RunMode::offline;
      return execute_run(std::move(c));
    }
    if (*simulate) {
      auto c = resolve(sim_flags);
      c.simulate = true;
      c.run.mode = parse_run_mode(sim_mode);
      return execute_run(std::move(c));
    }
    if (*sweep) {
      std::size_t attempts = sweep_config.empty() ? RunConfig{}.solver_attempts
                                                  : load_config(sweep_config).run.solver_attempts;
      if (sweep_attempts) attempts = *sweep_attempts;
      const auto reports = read_reports_file(sweep_reports);
      auto records = sweep_records(reports);
      if (!sweep_judge.empty()) {
        std::ifstream judge(sweep_judge);
        if (!judge) throw IoError("cannot open judge file " + sweep_judge);
        apply_judge_verdicts(records, judge);
      }
      const auto points = sweep_tau_low(records, attempts, parse_thresholds(sweep_thresholds));
      std::ofstream file;
      if (!sweep_output.empty()) file = open_output(sweep_output);
      std::ostream& out = sweep_output.empty() ? std::cout : file;
      out << "tau,retained,retention,quality\n";
      for (const auto& p : points) {
        out << format_double(p.tau) << ',' << p.retained << ',' << format_double(p.retention) << ','
            << (p.quality ? format_double(*p.quality) : "") << '\n';
      }
      return kOk;
    }
    if (*probe) {
      if (probe_pairs.empty() && probe_questions.empty()) {
        throw ConfigError("probe-memorization needs --pairs or --questions");
      }
      std::ifstream in(probe_pairs.empty() ? probe_questions : probe_pairs);
      if (!in) throw IoError("cannot open probe input");
      std::ofstream file;
      if (!probe_output.empty()) file = open_output(probe_output);
      std::ostream& out = probe_output.empty() ? std::cout : file;
      const auto ratios = parse_thresholds(probe_ratios);
      std::string line;
      std::size_t n = 0, line_no = 0;
      double rouge_total = 0.0, em_total = 0.0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
          if (!probe_pairs.empty()) {
            const auto q_old = j.at("q_old").get<std::string>();
            const auto q_new = j.at("q_new").get<std::string>();
            const double rouge = rouge_l_prefix_probe(q_old, q_new);
            const int em = exact_match(q_old, q_new);
            rouge_total += rouge;
            em_total += em;
            ++n;
            out << "{\"line\":" << line_no << ",\"rouge_l\":" << format_double(rouge)
                << ",\"exact_match\":" << em << "}\n";
          } else {
            const auto q = j.at("question").get<std::string>();
            for (double r : ratios) {
              nlohmann::ordered_json o = {{"line", line_no}, {"ratio", r}, {"prefix", question_prefix(q, r)}};
              out << o.dump() << '\n';
            }
          }
        } catch (const nlohmann::json::exception& e) {
          throw IoError("probe input line " + std::to_string(line_no) + ": " + e.what());
        }
      }
      if (!probe_pairs.empty()) {
        std::cerr << "pairs " << n << "  mean_rouge_l "
                  << format_double(n ? rouge_total / static_cast<double>(n) : 0.0)
                  << "  mean_exact_match " << format_double(n ? em_total / static_cast<double>(n) : 0.0)
                  << '\n';
      }
      return kOk;
    }
    if (*exp) {
      OutputConfig o = export_config.empty() ? OutputConfig{} : load_config(export_config).output;
      if (export_ema) o.ema = *export_ema;
      const auto reports = read_reports_file(export_reports);
      const auto table = build_metrics(reports, o.ema);
      if (export_csv.empty()) {
        write_metrics_csv(table, std::cout);
      } else {
        auto out = open_output(export_csv);
        write_metrics_csv(table, out);
      }
      if (!export_jsonl.empty()) {
        auto out = open_output(export_jsonl);
        write_metrics_jsonl(table, out);
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
