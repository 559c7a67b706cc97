#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualplay/grading.hpp"
#include "dualplay/reward.hpp"

namespace dualplay {

/// Sliding window of the most recent Proposer questions (H). Token sets are
/// cached next to the text so diversity scoring does not re-tokenize.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity);

  void push(std::string question);

  /// Diversity reward of a question against the current window.
  double diversity(const TokenSet& question, const RewardConfig& cfg) const;

  std::span<const std::string> entries() const { return entries_; }
  std::span<const TokenSet> token_sets() const { return tokens_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<std::string> entries_;  // oldest first
  std::vector<TokenSet> tokens_;
};

struct QuestionBufferEntry {
  std::uint64_t entry_id = 0;
  QAPair qa;
  std::uint64_t admitted_at = 0;
  double admission_passing_rate = 0.0;
  std::uint64_t replay_count = 0;
  double peak_passing_rate = 0.0;
  std::uint64_t stagnation_count = 0;
};

struct EvictionPolicy {
  bool enabled = false;
  std::size_t patience = 3;  // c
};

enum class EvictDecision { keep, evict };

/// Records a replay observation on the entry and decides eviction. The
/// entry's peak and stagnation bookkeeping is updated either way.
EvictDecision buffer_evict_check(QuestionBufferEntry& entry, double new_passing_rate,
                                 const EvictionPolicy& policy);

/// Thrown by replay on an empty buffer.
struct BufferExhausted : std::runtime_error {
  BufferExhausted() : std::runtime_error("question buffer is empty") {}
};

/// Offline question buffer (B) with a persistent circular replay cursor.
class QuestionBuffer {
 public:
  /// Admits a retained question. Throws std::logic_error when the pair is
  /// not format-valid or its passing rate fails the retention rule.
  const QuestionBufferEntry& add(QAPair qa, double passing_rate, std::uint64_t step,
                                 const RewardConfig& cfg);

  /// Next batch_size entry ids in admission order, wrapping circularly.
  /// Increments replay_count of every returned occurrence.
  std::vector<std::uint64_t> replay(std::size_t batch_size);

  QuestionBufferEntry* find(std::uint64_t entry_id);
  const QuestionBufferEntry* find(std::uint64_t entry_id) const;
  bool remove(std::uint64_t entry_id);

  const std::vector<QuestionBufferEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t cursor() const { return cursor_; }

  /// JSONL checkpoint: a header line with the cursor, then one line per entry.
  void save(std::ostream& out) const;
  static QuestionBuffer load(std::istream& in);
  void save_file(const std::filesystem::path& path) const;
  static QuestionBuffer load_file(const std::filesystem::path& path);

 private:
  std::vector<QuestionBufferEntry> entries_;
  std::size_t cursor_ = 0;
  std::uint64_t next_entry_id_ = 0;
};

}  // namespace dualplay
