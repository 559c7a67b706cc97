#include "dualplay/remote.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <thread>

#include <httplib.h>

namespace dualplay {

using nlohmann::ordered_json;

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
  const double scaled = static_cast<double>(initial_backoff.count()) *
                        std::pow(backoff_factor, static_cast<double>(retry));
  const double capped = std::min(scaled, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(capped));
}

bool is_transient(const HttpResult& result) {
  return result.status == 0 || result.status == 408 || result.status == 429 ||
         result.status >= 500;
}

HttpResult http_post_json(const std::string& base_url, const std::string& path,
                          const std::string& body, const std::string& bearer_token,
                          std::chrono::duration<double> timeout) {
  HttpResult out;
  try {
    httplib::Client client(base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
  } catch (const std::exception& e) {
    out.status = 0;
    out.error = e.what();
  }
  return out;
}

HttpResult post_with_retries(const std::function<HttpResult()>& attempt, const RetryPolicy& policy,
                             const SleepFn& sleep, int* retries_used) {
  int retries = 0;
  HttpResult result = attempt();
  while (is_transient(result) && retries < policy.max_retries) {
    const auto delay = policy.delay_for(retries);
    if (sleep) {
      sleep(delay);
    } else {
      std::this_thread::sleep_for(delay);
    }
    ++retries;
    result = attempt();
  }
  if (retries_used) *retries_used = retries;
  return result;
}

ordered_json chat_request_body(const GenerationRequest& req, const std::string& model,
                               std::size_t n) {
  ordered_json body;
  if (!model.empty()) body["model"] = model;
  body["messages"] = ordered_json::array({
      {{"role", "system"}, {"content", req.system_prompt}},
      {{"role", "user"}, {"content", req.user_prompt}},
  });
  body["n"] = n;
  body["temperature"] = req.temperature;
  body["top_p"] = req.top_p;
  body["max_tokens"] = req.max_tokens;
  return body;
}

std::vector<std::string> parse_chat_response(const ordered_json& response) {
  if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array()) {
    throw GenerationError("chat response has no choices array");
  }
  std::vector<std::string> texts;
  for (const auto& choice : response["choices"]) {
    const auto message = choice.find("message");
    if (message == choice.end() || !message->is_object()) {
      throw GenerationError("chat response choice lacks a message");
    }
    const auto content = message->find("content");
    if (content == message->end()) throw GenerationError("chat response message lacks content");
    texts.push_back(content->is_string() ? content->get<std::string>() : std::string());
  }
  return texts;
}

HttpChatTransport::HttpChatTransport(EndpointConfig config, SleepFn sleep)
    : config_(std::move(config)), sleep_(std::move(sleep)) {
  if (config_.base_url.empty()) throw ConfigError("endpoint base_url is required");
  if (!config_.api_key_env.empty()) {
    if (const char* token = std::getenv(config_.api_key_env.c_str())) token_ = token;
  }
}

ordered_json HttpChatTransport::exchange(std::uint64_t /*call*/, std::uint64_t /*part*/,
                                         const ordered_json& request) {
  const std::string body = request.dump();
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  int retries = 0;
  const HttpResult result = post_with_retries(
      [&] { return http_post_json(config_.base_url, config_.path, body, token_, timeout); },
      config_.retry, sleep_, &retries);
  if (result.status < 200 || result.status >= 300) {
    throw GenerationError("chat endpoint " + config_.base_url + config_.path + " failed after " +
                          std::to_string(retries) + " retries: " +
                          (result.status == 0 ? result.error
                                              : "HTTP " + std::to_string(result.status)));
  }
  ordered_json parsed = ordered_json::parse(result.body, nullptr, false);
  if (parsed.is_discarded()) throw GenerationError("chat endpoint returned malformed JSON");
  return parsed;
}

TranscriptRecorder::TranscriptRecorder(std::shared_ptr<ChatTransport> inner,
                                       const std::filesystem::path& path)
    : inner_(std::move(inner)), path_(path) {
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw IoError("cannot open transcript " + path_.string());
}

ordered_json TranscriptRecorder::exchange(std::uint64_t call, std::uint64_t part,
                                          const ordered_json& request) {
  ordered_json response = inner_->exchange(call, part, request);
  ordered_json line;
  line["call"] = call;
  line["part"] = part;
  line["request"] = request;
  line["response"] = response;
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  out << line.dump() << '\n';
  return response;
}

PlaybackTransport::PlaybackTransport(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transcript " + path.string());
  std::string text;
  std::size_t index = 0;
  while (std::getline(in, text)) {
    ++index;
    if (text.empty()) continue;
    ordered_json line = ordered_json::parse(text, nullptr, false);
    if (line.is_discarded() || !line.contains("call") || !line.contains("part")) {
      throw IoError("transcript line " + std::to_string(index) + " is malformed");
    }
    records_[{line["call"].get<std::uint64_t>(), line["part"].get<std::uint64_t>()}] = {
        line["request"], line["response"]};
  }
}

ordered_json PlaybackTransport::exchange(std::uint64_t call, std::uint64_t part,
                                         const ordered_json& request) {
  const auto it = records_.find({call, part});
  if (it == records_.end()) {
    throw GenerationError("transcript has no exchange for call " + std::to_string(call));
  }
  if (it->second.first != request) {
    throw GenerationError("request for call " + std::to_string(call) +
                          " diverges from the transcript");
  }
  return it->second.second;
}

RemoteBackend::RemoteBackend(std::shared_ptr<ChatTransport> transport, std::string model,
                             std::size_t max_concurrency)
    : transport_(std::move(transport)),
      model_(std::move(model)),
      max_concurrency_(std::max<std::size_t>(1, max_concurrency)) {}

std::unique_ptr<RemoteBackend> RemoteBackend::from_config(const EndpointConfig& config) {
  if (!config.playback_path.empty()) {
    return std::make_unique<RemoteBackend>(std::make_shared<PlaybackTransport>(config.playback_path),
                                           config.model, config.max_concurrency);
  }
  std::shared_ptr<ChatTransport> transport = std::make_shared<HttpChatTransport>(config);
  if (!config.transcript_path.empty()) {
    transport = std::make_shared<TranscriptRecorder>(transport, config.transcript_path);
  }
  return std::make_unique<RemoteBackend>(transport, config.model, config.max_concurrency);
}

std::vector<std::string> RemoteBackend::generate_call(std::uint64_t call,
                                                      const GenerationRequest& req) {
  if (req.n == 0) throw GenerationError("generation request asks for zero completions");
  std::vector<std::string> texts;
  texts.reserve(req.n);
  // Some servers ignore n; ask again for the remainder.
  for (std::uint64_t part = 0; texts.size() < req.n; ++part) {
    const std::size_t remaining = req.n - texts.size();
    auto batch = parse_chat_response(
        transport_->exchange(call, part, chat_request_body(req, model_, remaining)));
    if (batch.empty()) throw GenerationError("chat endpoint returned zero choices");
    for (auto& text : batch) {
      if (texts.size() == req.n) break;
      texts.push_back(std::move(text));
    }
  }
  return texts;
}

std::vector<std::string> RemoteBackend::generate(const GenerationRequest& req) {
  return generate_call(next_call_++, req);
}

std::vector<std::vector<std::string>> RemoteBackend::generate_all(
    std::span<const GenerationRequest> requests) {
  const std::uint64_t first_call = next_call_;
  next_call_ += requests.size();
  std::vector<std::vector<std::string>> results(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i] = generate_call(first_call + i, requests[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(max_concurrency_, requests.size());
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins

  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return results;
}

}  // namespace dualplay
