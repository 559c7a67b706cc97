#include "dualplay/config.hpp"

#include <fstream>
#include <set>

namespace dualplay {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads known keys from one object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key " + where_ + "." + key);
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  void get_ms(const char* key, std::chrono::milliseconds& out) {
    long long ms = out.count();
    get(key, ms);
    out = std::chrono::milliseconds(ms);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_sampling(const json& j, const std::string& where, SamplingProfile& p) {
  Section s(j, where);
  s.get("temperature", p.temperature);
  s.get("top_p", p.top_p);
  s.get("max_completion_tokens", p.max_completion_tokens);
  s.get("max_prompt_tokens", p.max_prompt_tokens);
}

void read_retry(Section& s, RetryPolicy& r) {
  s.get("max_retries", r.max_retries);
  s.get_ms("initial_backoff_ms", r.initial_backoff);
  s.get("backoff_factor", r.backoff_factor);
  s.get_ms("max_backoff_ms", r.max_backoff);
}

EndpointConfig read_endpoint(const json& j, const std::string& where) {
  EndpointConfig e;
  Section s(j, where);
  s.get("base_url", e.base_url);
  s.get("path", e.path);
  s.get("model", e.model);
  s.get("api_key_env", e.api_key_env);
  s.get("timeout_seconds", e.timeout_seconds);
  s.get("max_concurrency", e.max_concurrency);
  s.get("transcript_path", e.transcript_path);
  s.get("playback_path", e.playback_path);
  read_retry(s, e.retry);
  if (e.base_url.empty() && e.playback_path.empty()) {
    throw ConfigError(where + " needs base_url (or playback_path)");
  }
  return e;
}

ordered_json retry_json(const RetryPolicy& r) {
  return {{"max_retries", r.max_retries},
          {"initial_backoff_ms", r.initial_backoff.count()},
          {"backoff_factor", r.backoff_factor},
          {"max_backoff_ms", r.max_backoff.count()}};
}

ordered_json endpoint_json(const EndpointConfig& e) {
  ordered_json j = {{"base_url", e.base_url},
                    {"path", e.path},
                    {"model", e.model},
                    {"api_key_env", e.api_key_env},
                    {"timeout_seconds", e.timeout_seconds},
                    {"max_concurrency", e.max_concurrency},
                    {"transcript_path", e.transcript_path},
                    {"playback_path", e.playback_path}};
  j.update(retry_json(e.retry));
  return j;
}

ordered_json sampling_json(const SamplingProfile& p) {
  return {{"temperature", p.temperature},
          {"top_p", p.top_p},
          {"max_completion_tokens", p.max_completion_tokens},
          {"max_prompt_tokens", p.max_prompt_tokens}};
}

}  // namespace

AppConfig config_from_json(const json& doc) {
  AppConfig c;
  Section root(doc, "config");

  if (const auto* j = root.child("run")) {
    Section s(*j, "run");
    std::string mode(to_string(c.run.mode));
    std::string reward_mode(to_string(c.run.reward_mode));
    s.get("mode", mode);
    c.run.mode = parse_run_mode(mode);
    s.get("proposer_generations", c.run.proposer_generations);
    s.get("solver_attempts", c.run.solver_attempts);
    s.get("max_steps", c.run.max_steps);
    s.get("proposer_steps", c.run.proposer_steps);
    s.get("solver_steps", c.run.solver_steps);
    s.get("max_iterations", c.run.max_iterations);
    s.get("replay_batch_size", c.run.replay_batch_size);
    s.get("knowledge_per_step", c.run.knowledge_per_step);
    s.get("without_knowledge", c.run.without_knowledge);
    s.get("frozen_proposer", c.run.frozen_proposer);
    s.get("without_diversity", c.run.without_diversity);
    s.get("reward_mode", reward_mode);
    c.run.reward_mode = parse_reward_mode(reward_mode);
    s.get("seed", c.run.seed);
    if (const auto* e = s.child("eviction")) {
      Section ev(*e, "run.eviction");
      ev.get("enabled", c.run.eviction.enabled);
      ev.get("patience", c.run.eviction.patience);
    }
    if (const auto* p = s.child("proposer_sampling")) {
      read_sampling(*p, "run.proposer_sampling", c.run.proposer_sampling);
    }
    if (const auto* p = s.child("solver_sampling")) {
      read_sampling(*p, "run.solver_sampling", c.run.solver_sampling);
    }
  }

  if (const auto* j = root.child("reward")) {
    Section s(*j, "reward");
    s.get("tau_low", c.reward.tau_low);
    s.get("tau_sim", c.reward.tau_sim);
    s.get("tau_div", c.reward.tau_div);
    s.get("w_div", c.reward.w_div);
    s.get("history_capacity", c.reward.history_capacity);
    s.get("inclusive_tau_low", c.reward.inclusive_tau_low);
  }

  if (const auto* j = root.child("proposer_endpoint")) {
    c.proposer_endpoint = read_endpoint(*j, "proposer_endpoint");
  }
  if (const auto* j = root.child("solver_endpoint")) {
    c.solver_endpoint = read_endpoint(*j, "solver_endpoint");
  }

  if (const auto* j = root.child("sink")) {
    Section s(*j, "sink");
    s.get("kind", c.sink.kind);
    s.get("path", c.sink.path);
    s.get("base_url", c.sink.http.base_url);
    s.get("url_path", c.sink.http.path);
    s.get("api_key_env", c.sink.http.api_key_env);
    s.get("timeout_seconds", c.sink.http.timeout_seconds);
    read_retry(s, c.sink.http.retry);
    if (c.sink.kind != "none" && c.sink.kind != "file" && c.sink.kind != "http") {
      throw ConfigError("sink.kind must be none, file or http");
    }
  }

  if (const auto* j = root.child("knowledge")) {
    Section s(*j, "knowledge");
    s.get("store", c.knowledge.store);
    s.get("max_tokens", c.knowledge.max_tokens);
  }

  if (const auto* j = root.child("simulation")) {
    Section s(*j, "simulation");
    auto& sim = c.simulation;
    s.get("enabled", c.simulate);
    s.get("difficulty_spread", sim.proposer.difficulty_spread);
    s.get("format_error_rate", sim.proposer.format_error_rate);
    s.get("wrong_answer_rate", sim.proposer.wrong_answer_rate);
    s.get("proposer_initial_skill", sim.proposer_initial_skill);
    s.get("proposer_learning_rate", sim.proposer_learning_rate);
    s.get("solver_initial_skill", sim.solver_initial_skill);
    s.get("solver_learning_rate", sim.solver_learning_rate);
    s.get("solver_format_error_rate", sim.solver_format_error_rate);
    s.get("heldout_min", sim.heldout_min);
    s.get("heldout_max", sim.heldout_max);
    s.get("heldout_points", sim.heldout_points);
    s.get("knowledge_pieces", sim.knowledge_pieces);
  }

  if (const auto* j = root.child("output")) {
    Section s(*j, "output");
    s.get("reports", c.output.reports);
    s.get("metrics_csv", c.output.metrics_csv);
    s.get("metrics_jsonl", c.output.metrics_jsonl);
    s.get("ema", c.output.ema);
  }
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

ordered_json to_json(const AppConfig& c) {
  ordered_json j;
  j["run"] = {{"mode", to_string(c.run.mode)},
              {"proposer_generations", c.run.proposer_generations},
              {"solver_attempts", c.run.solver_attempts},
              {"max_steps", c.run.max_steps},
              {"proposer_steps", c.run.proposer_steps},
              {"solver_steps", c.run.solver_steps},
              {"max_iterations", c.run.max_iterations},
              {"replay_batch_size", c.run.replay_batch_size},
              {"knowledge_per_step", c.run.knowledge_per_step},
              {"without_knowledge", c.run.without_knowledge},
              {"frozen_proposer", c.run.frozen_proposer},
              {"without_diversity", c.run.without_diversity},
              {"reward_mode", to_string(c.run.reward_mode)},
              {"seed", c.run.seed},
              {"eviction", {{"enabled", c.run.eviction.enabled}, {"patience", c.run.eviction.patience}}},
              {"proposer_sampling", sampling_json(c.run.proposer_sampling)},
              {"solver_sampling", sampling_json(c.run.solver_sampling)}};
  j["reward"] = {{"tau_low", c.reward.tau_low},
                 {"tau_sim", c.reward.tau_sim},
                 {"tau_div", c.reward.tau_div},
                 {"w_div", c.reward.w_div},
                 {"history_capacity", c.reward.history_capacity},
                 {"inclusive_tau_low", c.reward.inclusive_tau_low}};
  if (c.proposer_endpoint) j["proposer_endpoint"] = endpoint_json(*c.proposer_endpoint);
  if (c.solver_endpoint) j["solver_endpoint"] = endpoint_json(*c.solver_endpoint);
  ordered_json sink = {{"kind", c.sink.kind},
                       {"path", c.sink.path},
                       {"base_url", c.sink.http.base_url},
                       {"url_path", c.sink.http.path},
                       {"api_key_env", c.sink.http.api_key_env},
                       {"timeout_seconds", c.sink.http.timeout_seconds}};
  sink.update(retry_json(c.sink.http.retry));
  j["sink"] = sink;
  j["knowledge"] = {{"store", c.knowledge.store}, {"max_tokens", c.knowledge.max_tokens}};
  const auto& sim = c.simulation;
  j["simulation"] = {{"enabled", c.simulate},
                     {"difficulty_spread", sim.proposer.difficulty_spread},
                     {"format_error_rate", sim.proposer.format_error_rate},
                     {"wrong_answer_rate", sim.proposer.wrong_answer_rate},
                     {"proposer_initial_skill", sim.proposer_initial_skill},
                     {"proposer_learning_rate", sim.proposer_learning_rate},
                     {"solver_initial_skill", sim.solver_initial_skill},
                     {"solver_learning_rate", sim.solver_learning_rate},
                     {"solver_format_error_rate", sim.solver_format_error_rate},
                     {"heldout_min", sim.heldout_min},
                     {"heldout_max", sim.heldout_max},
                     {"heldout_points", sim.heldout_points},
                     {"knowledge_pieces", sim.knowledge_pieces}};
  j["output"] = {{"reports", c.output.reports},
                 {"metrics_csv", c.output.metrics_csv},
                 {"metrics_jsonl", c.output.metrics_jsonl},
                 {"ema", c.output.ema}};
  return j;
}

}  // namespace dualplay
