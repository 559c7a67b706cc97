#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dualplay/grading.hpp"
#include "dualplay/rng.hpp"

namespace dualplay {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KnowledgePiece {
  KnowledgeId id = 0;
  std::string text;
  std::size_t token_count = 0;
};

using TokenCounter = std::function<std::size_t(std::string_view)>;

/// Whitespace-delimited word count; the default stand-in for a model
/// tokenizer.
std::size_t count_whitespace_tokens(std::string_view text);

struct IngestOptions {
  std::size_t max_tokens = 1024;
  TokenCounter counter = count_whitespace_tokens;
};

struct IngestSummary {
  std::size_t admitted = 0;
  std::size_t rejected = 0;
  std::vector<std::string> warnings;  // one per skipped record, with its index
};

/// Immutable after construction; safe for concurrent readers.
class KnowledgeStore {
 public:
  KnowledgeStore() = default;

  /// Reads JSONL records carrying a "text" field. Over-length, empty and
  /// malformed records are rejected with a warning; admitted pieces get
  /// sequential ids starting at 0.
  static KnowledgeStore ingest(std::istream& source, const IngestOptions& options,
                               IngestSummary* summary = nullptr);
  static KnowledgeStore ingest_file(const std::filesystem::path& path,
                                    const IngestOptions& options,
                                    IngestSummary* summary = nullptr);

  /// Store format: JSONL with id, text, token_count. Every piece is checked
  /// against max_tokens on load.
  static KnowledgeStore load(std::istream& in, std::size_t max_tokens = 1024);
  static KnowledgeStore load_file(const std::filesystem::path& path,
                                  std::size_t max_tokens = 1024);
  void save(std::ostream& out) const;
  void save_file(const std::filesystem::path& path) const;

  /// Uniform draw with replacement. Throws ConfigError on an empty store.
  const KnowledgePiece& sample(Rng& rng) const;

  static KnowledgeStore from_pieces(std::vector<KnowledgePiece> pieces);

  const std::vector<KnowledgePiece>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }
  bool empty() const { return pieces_.empty(); }

 private:
  std::vector<KnowledgePiece> pieces_;
};

}  // namespace dualplay
