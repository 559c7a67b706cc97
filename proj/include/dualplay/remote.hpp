#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include <json.hpp>

#include "dualplay/agents.hpp"

namespace dualplay {

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_backoff{30000};

  std::chrono::milliseconds delay_for(int retry) const;
};

struct HttpResult {
  int status = 0;  // 0 on transport failure
  std::string body;
  std::string error;
};

/// Transport failures, 408, 429 and 5xx are worth retrying.
bool is_transient(const HttpResult& result);

/// POSTs a JSON body. Does not retry.
HttpResult http_post_json(const std::string& base_url, const std::string& path,
                          const std::string& body, const std::string& bearer_token,
                          std::chrono::duration<double> timeout);

using SleepFn = std::function<void(std::chrono::milliseconds)>;

/// Runs `attempt` until it returns a non-transient result or retries run
/// out. `retries_used` receives the number of retries performed.
HttpResult post_with_retries(const std::function<HttpResult()>& attempt, const RetryPolicy& policy,
                             const SleepFn& sleep, int* retries_used = nullptr);

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_seconds = 600.0;
  RetryPolicy retry;
  std::size_t max_concurrency = 8;
  std::string transcript_path;  // empty: no transcript
  std::string playback_path;    // non-empty: replay a transcript instead of calling base_url
};

/// Chat-completions request body for a generation request.
nlohmann::ordered_json chat_request_body(const GenerationRequest& req, const std::string& model,
                                         std::size_t n);

/// Completion texts of a chat-completions response. Throws GenerationError
/// when the response has no usable choices.
std::vector<std::string> parse_chat_response(const nlohmann::ordered_json& response);

/// One request/response exchange. Implementations must be thread-safe.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// call/part identify the exchange deterministically for transcripts.
  virtual nlohmann::ordered_json exchange(std::uint64_t call, std::uint64_t part,
                                          const nlohmann::ordered_json& request) = 0;
};

/// HTTP transport with bounded exponential-backoff retries.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(EndpointConfig config, SleepFn sleep = {});
  nlohmann::ordered_json exchange(std::uint64_t call, std::uint64_t part,
                                  const nlohmann::ordered_json& request) override;

 private:
  EndpointConfig config_;
  std::string token_;
  SleepFn sleep_;
};

/// Appends {call, part, request, response} lines around another transport.
class TranscriptRecorder : public ChatTransport {
 public:
  TranscriptRecorder(std::shared_ptr<ChatTransport> inner, const std::filesystem::path& path);
  nlohmann::ordered_json exchange(std::uint64_t call, std::uint64_t part,
                                  const nlohmann::ordered_json& request) override;

 private:
  std::shared_ptr<ChatTransport> inner_;
  std::filesystem::path path_;
  std::mutex mutex_;
};

/// Serves responses from a transcript, checking each request matches the
/// recorded one.
class PlaybackTransport : public ChatTransport {
 public:
  explicit PlaybackTransport(const std::filesystem::path& path);
  nlohmann::ordered_json exchange(std::uint64_t call, std::uint64_t part,
                                  const nlohmann::ordered_json& request) override;

 private:
  std::map<std::pair<std::uint64_t, std::uint64_t>,
           std::pair<nlohmann::ordered_json, nlohmann::ordered_json>>
      records_;
};

/// Chat-completions backend. generate_all fans requests out over up to
/// max_concurrency workers; results keep request order.
class RemoteBackend : public GenerationBackend {
 public:
  RemoteBackend(std::shared_ptr<ChatTransport> transport, std::string model,
                std::size_t max_concurrency = 8);
  static std::unique_ptr<RemoteBackend> from_config(const EndpointConfig& config);

  std::vector<std::string> generate(const GenerationRequest& req) override;
  std::vector<std::vector<std::string>> generate_all(
      std::span<const GenerationRequest> requests) override;

 private:
  std::vector<std::string> generate_call(std::uint64_t call, const GenerationRequest& req);

  std::shared_ptr<ChatTransport> transport_;
  std::string model_;
  std::size_t max_concurrency_;
  std::uint64_t next_call_ = 0;
};

}  // namespace dualplay
