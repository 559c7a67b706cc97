#include "dualplay/sink.hpp"

#include <cstdlib>
#include <fstream>

namespace dualplay {

FileSink::FileSink(std::filesystem::path path, bool truncate) : path_(std::move(path)) {
  std::ofstream out(path_, truncate ? std::ios::trunc : std::ios::app);
  if (!out) throw SinkError("cannot open batch sink file " + path_.string());
}

void FileSink::emit(const TrainingBatch& batch) {
  std::ofstream out(path_, std::ios::app);
  out << to_json(batch).dump() << '\n';
  out.flush();
  if (!out) throw SinkError("failed to append batch to " + path_.string());
}

HttpSink::HttpSink(HttpSinkConfig config, SleepFn sleep)
    : config_(std::move(config)), sleep_(std::move(sleep)) {
  if (config_.base_url.empty()) throw ConfigError("HTTP sink needs a base_url");
  if (!config_.api_key_env.empty()) {
    if (const char* token = std::getenv(config_.api_key_env.c_str())) token_ = token;
  }
}

void HttpSink::emit(const TrainingBatch& batch) {
  const std::string body = to_json(batch).dump();
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  int retries = 0;
  const auto result = post_with_retries(
      [&] { return http_post_json(config_.base_url, config_.path, body, token_, timeout); },
      config_.retry, sleep_, &retries);
  if (result.status < 200 || result.status >= 300) {
    throw SinkError("batch sink " + config_.base_url + config_.path + " rejected " +
                    std::string(to_string(batch.role)) + " batch for step " +
                    std::to_string(batch.step) + " after " + std::to_string(retries) +
                    " retries: " +
                    (result.status == 0 ? result.error : "HTTP " + std::to_string(result.status)));
  }
}

}  // namespace dualplay
