#include "dualplay/buffers.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "dualplay/knowledge.hpp"
#include "json_io.hpp"

namespace dualplay {

using detail::ordered_json;

HistoryBuffer::HistoryBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("history capacity must be positive");
  entries_.reserve(capacity_ + 1);
  tokens_.reserve(capacity_ + 1);
}

void HistoryBuffer::push(std::string question) {
  tokens_.push_back(token_set(question));
  entries_.push_back(std::move(question));
  if (entries_.size() > capacity_) {
    entries_.erase(entries_.begin());
    tokens_.erase(tokens_.begin());
  }
}

double HistoryBuffer::diversity(const TokenSet& question, const RewardConfig& cfg) const {
  return diversity_reward(question, std::span<const TokenSet>(tokens_), cfg);
}

EvictDecision buffer_evict_check(QuestionBufferEntry& entry, double new_passing_rate,
                                 const EvictionPolicy& policy) {
  if (!(new_passing_rate >= 0.0 && new_passing_rate <= 1.0)) {
    throw std::invalid_argument("passing rate must lie in [0, 1]");
  }
  if (new_passing_rate > entry.peak_passing_rate) {
    entry.peak_passing_rate = new_passing_rate;
    entry.stagnation_count = 0;
  } else {
    ++entry.stagnation_count;
  }
  if (!policy.enabled) return EvictDecision::keep;
  if (new_passing_rate >= 1.0) return EvictDecision::evict;
  // A new peak resets the counter above, so this only fires without progress.
  if (entry.stagnation_count >= policy.patience && entry.stagnation_count > 0) {
    return EvictDecision::evict;
  }
  return EvictDecision::keep;
}

const QuestionBufferEntry& QuestionBuffer::add(QAPair qa, double passing_rate, std::uint64_t step,
                                               const RewardConfig& cfg) {
  if (!qa.format_ok) throw std::logic_error("buffer_add: question is not format-valid");
  if (!(passing_rate >= 0.0 && passing_rate <= 1.0) || !is_retained(passing_rate, cfg)) {
    throw std::logic_error("buffer_add: passing rate " + std::to_string(passing_rate) +
                           " violates the retention rule");
  }
  QuestionBufferEntry entry;
  entry.entry_id = next_entry_id_++;
  entry.qa = std::move(qa);
  entry.admitted_at = step;
  entry.admission_passing_rate = passing_rate;
  entry.peak_passing_rate = passing_rate;
  entries_.push_back(std::move(entry));
  return entries_.back();
}

std::vector<std::uint64_t> QuestionBuffer::replay(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("replay batch size must be positive");
  if (entries_.empty()) throw BufferExhausted();
  std::vector<std::uint64_t> ids;
  ids.reserve(batch_size);
  for (std::size_t n = 0; n < batch_size; ++n) {
    if (cursor_ >= entries_.size()) cursor_ = 0;
    auto& entry = entries_[cursor_++];
    ++entry.replay_count;
    ids.push_back(entry.entry_id);
  }
  if (cursor_ >= entries_.size()) cursor_ = 0;
  return ids;
}

QuestionBufferEntry* QuestionBuffer::find(std::uint64_t entry_id) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const QuestionBufferEntry& e) { return e.entry_id == entry_id; });
  return it == entries_.end() ? nullptr : &*it;
}

const QuestionBufferEntry* QuestionBuffer::find(std::uint64_t entry_id) const {
  return const_cast<QuestionBuffer*>(this)->find(entry_id);
}

bool QuestionBuffer::remove(std::uint64_t entry_id) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const QuestionBufferEntry& e) { return e.entry_id == entry_id; });
  if (it == entries_.end()) return false;
  const auto index = static_cast<std::size_t>(it - entries_.begin());
  entries_.erase(it);
  if (index < cursor_) --cursor_;
  if (cursor_ >= entries_.size()) cursor_ = 0;
  return true;
}

void QuestionBuffer::save(std::ostream& out) const {
  ordered_json header;
  header["type"] = "cursor";
  header["cursor"] = cursor_;
  header["next_entry_id"] = next_entry_id_;
  header["size"] = entries_.size();
  out << header.dump() << '\n';
  for (const auto& e : entries_) {
    ordered_json j;
    j["type"] = "entry";
    j["entry_id"] = e.entry_id;
    j["qa"] = detail::qa_to_json(e.qa);
    j["admitted_at"] = e.admitted_at;
    j["admission_passing_rate"] = e.admission_passing_rate;
    j["replay_count"] = e.replay_count;
    j["peak_passing_rate"] = e.peak_passing_rate;
    j["stagnation_count"] = e.stagnation_count;
    out << j.dump() << '\n';
  }
}

QuestionBuffer QuestionBuffer::load(std::istream& in) {
  QuestionBuffer buf;
  std::string line;
  if (!std::getline(in, line)) throw IoError("buffer checkpoint is empty");
  try {
    const auto header = ordered_json::parse(line);
    if (header.at("type") != "cursor") throw IoError("buffer checkpoint lacks a cursor header");
    buf.cursor_ = header.at("cursor").get<std::size_t>();
    buf.next_entry_id_ = header.at("next_entry_id").get<std::uint64_t>();
    const auto expected = header.at("size").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = ordered_json::parse(line);
      QuestionBufferEntry e;
      e.entry_id = j.at("entry_id").get<std::uint64_t>();
      e.qa = detail::qa_from_json(j.at("qa"));
      e.admitted_at = j.at("admitted_at").get<std::uint64_t>();
      e.admission_passing_rate = j.at("admission_passing_rate").get<double>();
      e.replay_count = j.at("replay_count").get<std::uint64_t>();
      e.peak_passing_rate = j.at("peak_passing_rate").get<double>();
      e.stagnation_count = j.at("stagnation_count").get<std::uint64_t>();
      buf.entries_.push_back(std::move(e));
    }
    if (buf.entries_.size() != expected) throw IoError("buffer checkpoint is truncated");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed buffer checkpoint: ") + e.what());
  }
  if (buf.cursor_ > buf.entries_.size()) throw IoError("buffer checkpoint cursor out of range");
  return buf;
}

void QuestionBuffer::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write buffer checkpoint " + path.string());
  save(out);
}

QuestionBuffer QuestionBuffer::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open buffer checkpoint " + path.string());
  return load(in);
}

}  // namespace dualplay
