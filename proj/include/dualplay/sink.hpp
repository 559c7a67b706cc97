#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualplay/batch.hpp"
#include "dualplay/remote.hpp"

namespace dualplay {

/// A trainer that misses a batch breaks parity, so sinks throw instead of
/// dropping.
struct SinkError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class BatchSink {
 public:
  virtual ~BatchSink() = default;
  virtual void emit(const TrainingBatch& batch) = 0;
};

class NullSink : public BatchSink {
 public:
  void emit(const TrainingBatch&) override {}
};

/// Keeps every batch in memory.
class MemorySink : public BatchSink {
 public:
  void emit(const TrainingBatch& batch) override { batches.push_back(batch); }
  std::vector<TrainingBatch> batches;
};

/// Appends one JSON line per batch.
class FileSink : public BatchSink {
 public:
  explicit FileSink(std::filesystem::path path, bool truncate = false);
  void emit(const TrainingBatch& batch) override;

 private:
  std::filesystem::path path_;
};

struct HttpSinkConfig {
  std::string base_url;
  std::string path = "/batches";
  std::string api_key_env;
  double timeout_seconds = 60.0;
  RetryPolicy retry;
};

/// POSTs each batch; anything but 2xx after retries throws SinkError.
class HttpSink : public BatchSink {
 public:
  explicit HttpSink(HttpSinkConfig config, SleepFn sleep = {});
  void emit(const TrainingBatch& batch) override;

 private:
  HttpSinkConfig config_;
  std::string token_;
  SleepFn sleep_;
};

}  // namespace dualplay
