#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dualplay/remote.hpp"
#include "dualplay/sink.hpp"
#include "support.hpp"

namespace dualplay {
namespace {

using nlohmann::ordered_json;

// Local chat-completions stand-in. The handler sees the parsed request and
// the 0-based hit count.
class MockServer {
 public:
  using Handler = std::function<void(const ordered_json&, int, httplib::Response&)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutex_);
      bodies.push_back(req.body);
      handler_(ordered_json::parse(req.body), hits_++, res);
    };
    server_.Post("/v1/chat/completions", route);
    server_.Post("/batches", route);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits() const { return hits_; }

  std::vector<std::string> bodies;

 private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  std::mutex mutex_;
  std::atomic<int> hits_{0};
  int port_ = 0;
};

void reply_choices(httplib::Response& res, std::size_t n, const std::string& prefix) {
  ordered_json body;
  body["choices"] = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    body["choices"].push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", prefix + std::to_string(i)}}}});
  }
  res.set_content(body.dump(), "application/json");
}

EndpointConfig endpoint(const MockServer& server) {
  EndpointConfig cfg;
  cfg.base_url = server.url();
  cfg.model = "mock";
  cfg.api_key_env.clear();
  cfg.timeout_seconds = 5;
  cfg.retry.max_retries = 3;
  return cfg;
}

const SleepFn kNoSleep = [](std::chrono::milliseconds) {};

TEST(RetryPolicy, ExponentialCapped) {
  RetryPolicy p;
  p.initial_backoff = std::chrono::milliseconds(100);
  p.backoff_factor = 2.0;
  p.max_backoff = std::chrono::milliseconds(500);
  EXPECT_EQ(p.delay_for(0).count(), 100);
  EXPECT_EQ(p.delay_for(1).count(), 200);
  EXPECT_EQ(p.delay_for(2).count(), 400);
  EXPECT_EQ(p.delay_for(3).count(), 500);
}

TEST(RetryPolicy, TransientClassification) {
  EXPECT_TRUE(is_transient({0, "", "refused"}));
  EXPECT_TRUE(is_transient({503, "", ""}));
  EXPECT_TRUE(is_transient({429, "", ""}));
  EXPECT_FALSE(is_transient({400, "", ""}));
  EXPECT_FALSE(is_transient({200, "", ""}));
}

TEST(RetryPolicy, StopsAtBudgetAndRecordsSleeps) {
  RetryPolicy p;
  p.max_retries = 2;
  std::vector<long long> sleeps;
  int calls = 0, used = -1;
  const auto result = post_with_retries(
      [&] {
        ++calls;
        return HttpResult{500, "", ""};
      },
      p, [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); }, &used);
  EXPECT_EQ(result.status, 500);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(used, 2);
  EXPECT_EQ(sleeps, (std::vector<long long>{500, 1000}));
}

TEST(ChatBody, CarriesSamplingParameters) {
  auto req = build_solver_prompt("What is 1+1?");
  req.n = 6;
  const auto body = chat_request_body(req, "m", 6);
  EXPECT_EQ(body["model"], "m");
  EXPECT_EQ(body["n"], 6);
  EXPECT_EQ(body["messages"][0]["content"], std::string(prompts::kSolverSystem));
  EXPECT_EQ(body["messages"][1]["content"], "What is 1+1?");
  EXPECT_EQ(body["max_tokens"], 6144);
}

TEST(ParseChatResponse, RejectsMalformed) {
  EXPECT_THROW(parse_chat_response(ordered_json::object()), GenerationError);
  EXPECT_THROW(parse_chat_response({{"choices", {{{"text", "x"}}}}}), GenerationError);
  EXPECT_EQ(parse_chat_response({{"choices", ordered_json::array()}}).size(), 0u);
}

TEST(RemoteBackend, RetriesTransientThenSucceeds) {
  MockServer server([](const ordered_json& req, int hit, httplib::Response& res) {
    if (hit < 2) {
      res.status = 503;
      return;
    }
    reply_choices(res, req["n"].get<std::size_t>(), "c");
  });
  RemoteBackend backend(std::make_shared<HttpChatTransport>(endpoint(server), kNoSleep), "mock");
  auto req = build_solver_prompt("q");
  req.n = 6;
  const auto out = backend.generate(req);
  EXPECT_EQ(out.size(), 6u);
  EXPECT_EQ(server.hits(), 3);
}

TEST(RemoteBackend, PersistentFailureRaises) {
  MockServer server([](const ordered_json&, int, httplib::Response& res) { res.status = 500; });
  RemoteBackend backend(std::make_shared<HttpChatTransport>(endpoint(server), kNoSleep), "mock");
  auto req = build_solver_prompt("q");
  try {
    backend.generate(req);
    FAIL() << "expected GenerationError";
  } catch (const GenerationError& e) {
    EXPECT_NE(std::string(e.what()).find("3 retries"), std::string::npos) << e.what();
  }
  EXPECT_EQ(server.hits(), 4);
}

TEST(RemoteBackend, NonTransientFailsWithoutRetry) {
  MockServer server([](const ordered_json&, int, httplib::Response& res) { res.status = 400; });
  RemoteBackend backend(std::make_shared<HttpChatTransport>(endpoint(server), kNoSleep), "mock");
  EXPECT_THROW(backend.generate(build_solver_prompt("q")), GenerationError);
  EXPECT_EQ(server.hits(), 1);
}

TEST(RemoteBackend, TopsUpWhenServerReturnsFewerChoices) {
  MockServer server([](const ordered_json&, int hit, httplib::Response& res) {
    reply_choices(res, 4, "h" + std::to_string(hit) + "-");
  });
  RemoteBackend backend(std::make_shared<HttpChatTransport>(endpoint(server), kNoSleep), "mock");
  auto req = build_proposer_prompt(nullptr);
  ASSERT_EQ(req.n, 6u);
  const auto out = backend.generate(req);
  ASSERT_EQ(out.size(), 6u);
  EXPECT_EQ(out[3], "h0-3");
  EXPECT_EQ(out[4], "h1-0");
  ASSERT_EQ(server.bodies.size(), 2u);
  EXPECT_EQ(ordered_json::parse(server.bodies[1])["n"], 2);
}

TEST(RemoteBackend, ZeroChoicesIsAnError) {
  MockServer server([](const ordered_json&, int, httplib::Response& res) { reply_choices(res, 0, ""); });
  RemoteBackend backend(std::make_shared<HttpChatTransport>(endpoint(server), kNoSleep), "mock");
  EXPECT_THROW(backend.generate(build_solver_prompt("q")), GenerationError);
}

TEST(RemoteBackend, GenerateAllKeepsRequestOrder) {
  MockServer server([](const ordered_json& req, int, httplib::Response& res) {
    const std::string q = req["messages"][1]["content"];
    reply_choices(res, req["n"].get<std::size_t>(), q + ":");
  });
  RemoteBackend backend(std::make_shared<HttpChatTransport>(endpoint(server), kNoSleep), "mock", 4);
  std::vector<GenerationRequest> reqs;
  for (int i = 0; i < 12; ++i) {
    auto r = build_solver_prompt("question " + std::to_string(i));
    r.n = 2;
    reqs.push_back(r);
  }
  const auto all = backend.generate_all(reqs);
  ASSERT_EQ(all.size(), 12u);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(all[i][0], "question " + std::to_string(i) + ":0");
    EXPECT_EQ(all[i].size(), 2u);
  }
}

TEST(Transcript, PlaybackReproducesCompletions) {
  testing::TempDir dir;
  const auto path = dir / "transcript.jsonl";
  std::vector<std::vector<std::string>> recorded;
  {
    MockServer server([](const ordered_json& req, int hit, httplib::Response& res) {
      reply_choices(res, req["n"].get<std::size_t>(), "r" + std::to_string(hit) + "-");
    });
    auto cfg = endpoint(server);
    cfg.transcript_path = path.string();
    auto backend = RemoteBackend::from_config(cfg);
    recorded.push_back(backend->generate(build_solver_prompt("first")));
    std::vector<GenerationRequest> reqs = {build_solver_prompt("a"), build_solver_prompt("b")};
    for (auto& r : backend->generate_all(reqs)) recorded.push_back(r);
  }
  EndpointConfig cfg;
  cfg.playback_path = path.string();
  cfg.model = "mock";
  auto replay = RemoteBackend::from_config(cfg);
  EXPECT_EQ(replay->generate(build_solver_prompt("first")), recorded[0]);
  std::vector<GenerationRequest> reqs = {build_solver_prompt("a"), build_solver_prompt("b")};
  const auto again = replay->generate_all(reqs);
  EXPECT_EQ(again[0], recorded[1]);
  EXPECT_EQ(again[1], recorded[2]);
}

TEST(Transcript, PlaybackRejectsDivergentRequest) {
  testing::TempDir dir;
  const auto path = dir / "transcript.jsonl";
  {
    MockServer server([](const ordered_json& req, int, httplib::Response& res) {
      reply_choices(res, req["n"].get<std::size_t>(), "x");
    });
    auto cfg = endpoint(server);
    cfg.transcript_path = path.string();
    RemoteBackend::from_config(cfg)->generate(build_solver_prompt("original"));
  }
  EndpointConfig cfg;
  cfg.playback_path = path.string();
  cfg.model = "mock";
  EXPECT_ANY_THROW(RemoteBackend::from_config(cfg)->generate(build_solver_prompt("changed")));
}

TrainingBatch sample_batch(std::uint64_t step) {
  return build_grpo_batch(Role::solver, step, {{"q", {"a", "b"}, {1.0, 0.0}}});
}

TEST(Sinks, FileSinkWritesOneLinePerBatch) {
  testing::TempDir dir;
  {
    FileSink sink(dir / "b.jsonl", true);
    for (int i = 0; i < 3; ++i) sink.emit(sample_batch(i));
  }
  const auto lines = testing::read_lines(dir / "b.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(lines[i], to_json(sample_batch(i)).dump());
  }
  FileSink again(dir / "b.jsonl", true);
  again.emit(sample_batch(9));
  EXPECT_EQ(testing::read_lines(dir / "b.jsonl").size(), 1u);
}

TEST(Sinks, NullAndMemory) {
  NullSink null;
  null.emit(sample_batch(0));
  MemorySink mem;
  mem.emit(sample_batch(1));
  ASSERT_EQ(mem.batches.size(), 1u);
  EXPECT_EQ(mem.batches[0].step, 1u);
}

TEST(Sinks, HttpSinkDelivers) {
  MockServer server([](const ordered_json&, int, httplib::Response& res) { res.status = 200; });
  HttpSinkConfig cfg;
  cfg.base_url = server.url();
  HttpSink sink(cfg, kNoSleep);
  sink.emit(sample_batch(5));
  ASSERT_EQ(server.bodies.size(), 1u);
  EXPECT_EQ(server.bodies[0], to_json(sample_batch(5)).dump());
}

TEST(Sinks, HttpSinkPersistentFailureRaises) {
  MockServer server([](const ordered_json&, int, httplib::Response& res) { res.status = 500; });
  HttpSinkConfig cfg;
  cfg.base_url = server.url();
  cfg.retry.max_retries = 2;
  HttpSink sink(cfg, kNoSleep);
  EXPECT_THROW(sink.emit(sample_batch(0)), SinkError);
  EXPECT_EQ(server.hits(), 3);
}

TEST(Sinks, UnreachableHttpSinkRaises) {
  HttpSinkConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.retry.max_retries = 1;
  cfg.timeout_seconds = 1;
  HttpSink sink(cfg, kNoSleep);
  EXPECT_THROW(sink.emit(sample_batch(0)), SinkError);
}

}  // namespace
}  // namespace dualplay
