#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "dualplay/orchestrator.hpp"
#include "dualplay/remote.hpp"
#include "dualplay/simulation.hpp"
#include "dualplay/sink.hpp"
#include "dualplay/telemetry.hpp"

namespace dualplay {

struct SinkConfig {
  std::string kind = "none";  // none | file | http
  std::string path;           // file sink
  HttpSinkConfig http;
};

struct KnowledgeConfig {
  std::string store;  // JSONL store written by `ingest`
  std::size_t max_tokens = 1024;
};

struct OutputConfig {
  std::string reports;  // step reports, JSONL
  std::string metrics_csv;
  std::string metrics_jsonl;
  double ema = kDefaultEmaFactor;
};

/// Everything a CLI run needs. Missing keys keep their defaults; unknown keys
/// are a ConfigError so typos do not silently fall back.
struct AppConfig {
  RunConfig run;
  RewardConfig reward;
  std::optional<EndpointConfig> proposer_endpoint;
  std::optional<EndpointConfig> solver_endpoint;
  SinkConfig sink;
  KnowledgeConfig knowledge;
  bool simulate = false;
  SimulationConfig simulation;
  OutputConfig output;
};

AppConfig config_from_json(const nlohmann::json& doc);
AppConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const AppConfig& config);

}  // namespace dualplay
