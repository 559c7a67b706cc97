#include "dualplay/knowledge.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace dualplay {

using nlohmann::ordered_json;

std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

KnowledgeStore KnowledgeStore::ingest(std::istream& source, const IngestOptions& options,
                                      IngestSummary* summary) {
  if (options.max_tokens == 0) throw ConfigError("max_tokens must be at least 1");
  IngestSummary local;
  IngestSummary& out = summary ? *summary : local;
  out = {};

  KnowledgeStore store;
  std::string line;
  std::size_t index = 0;
  while (std::getline(source, line)) {
    const std::size_t line_no = ++index;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    auto reject = [&](const std::string& why) {
      ++out.rejected;
      out.warnings.push_back("line " + std::to_string(line_no) + ": " + why);
    };

    ordered_json parsed = ordered_json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
      reject("malformed JSON");
      continue;
    }
    auto it = parsed.find("text");
    if (it == parsed.end() || !it->is_string()) {
      reject("missing string field \"text\"");
      continue;
    }
    std::string text = it->get<std::string>();
    if (text.empty()) {
      reject("empty text");
      continue;
    }
    const std::size_t tokens = options.counter(text);
    if (tokens > options.max_tokens) {
      reject("text has " + std::to_string(tokens) + " tokens, limit " +
             std::to_string(options.max_tokens));
      continue;
    }
    store.pieces_.push_back({static_cast<KnowledgeId>(store.pieces_.size()), std::move(text),
                             tokens});
    ++out.admitted;
  }
  if (source.bad()) throw IoError("failed while reading knowledge source");
  return store;
}

KnowledgeStore KnowledgeStore::ingest_file(const std::filesystem::path& path,
                                           const IngestOptions& options, IngestSummary* summary) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open knowledge source " + path.string());
  return ingest(in, options, summary);
}

KnowledgeStore KnowledgeStore::load(std::istream& in, std::size_t max_tokens) {
  KnowledgeStore store;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    ++index;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json record = ordered_json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
        !record.contains("text") || !record.contains("token_count")) {
      throw IoError("knowledge store line " + std::to_string(index) + " is malformed");
    }
    KnowledgePiece piece;
    try {
      piece.id = record.at("id").get<KnowledgeId>();
      piece.text = record.at("text").get<std::string>();
      piece.token_count = record.at("token_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("knowledge store line " + std::to_string(index) + ": " + e.what());
    }
    if (piece.text.empty()) {
      throw IoError("knowledge store line " + std::to_string(index) + " has empty text");
    }
    if (piece.token_count > max_tokens) {
      throw IoError("knowledge store line " + std::to_string(index) + " exceeds " +
                    std::to_string(max_tokens) + " tokens");
    }
    store.pieces_.push_back(std::move(piece));
  }
  if (in.bad()) throw IoError("failed while reading knowledge store");
  return store;
}

KnowledgeStore KnowledgeStore::load_file(const std::filesystem::path& path,
                                         std::size_t max_tokens) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open knowledge store " + path.string());
  return load(in, max_tokens);
}

void KnowledgeStore::save(std::ostream& out) const {
  for (const auto& piece : pieces_) {
    ordered_json record;
    record["id"] = piece.id;
    record["text"] = piece.text;
    record["token_count"] = piece.token_count;
    out << record.dump() << '\n';
  }
}

void KnowledgeStore::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write knowledge store " + path.string());
  save(out);
  if (!out) throw IoError("failed while writing knowledge store " + path.string());
}

const KnowledgePiece& KnowledgeStore::sample(Rng& rng) const {
  if (pieces_.empty()) throw ConfigError("cannot sample from an empty knowledge store");
  return pieces_[rng.uniform_index(pieces_.size())];
}

KnowledgeStore KnowledgeStore::from_pieces(std::vector<KnowledgePiece> pieces) {
  KnowledgeStore store;
  store.pieces_ = std::move(pieces);
  return store;
}

}  // namespace dualplay
