#include "dualplay/reward.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dualplay {
namespace {

void require_unit(double value, const char* what) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1], got " +
                                std::to_string(value));
  }
}

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* instance = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || instance == nullptr) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  return *instance;
}

}  // namespace

void RewardConfig::validate() const {
  require_unit(tau_low, "tau_low");
  require_unit(tau_sim, "tau_sim");
  require_unit(tau_div, "tau_div");
  if (!(w_div >= 0.0) || !std::isfinite(w_div)) {
    throw std::invalid_argument("w_div must be a finite non-negative number");
  }
  if (history_capacity == 0) throw std::invalid_argument("history_capacity must be positive");
}

double difficulty_reward(double p) {
  require_unit(p, "passing rate");
  return 1.1 - p;
}

TokenSet token_set(std::string_view text) {
  TokenSet tokens;
  if (text.empty()) return tokens;

  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString normalized =
      nfc().normalize(icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(),
                                                                     static_cast<int32_t>(text.size()))),
                      status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  normalized.foldCase();

  icu::UnicodeString current;
  auto flush = [&] {
    if (current.isEmpty()) return;
    std::string utf8;
    current.toUTF8String(utf8);
    tokens.push_back(std::move(utf8));
    current.remove();
  };
  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 cp = normalized.char32At(i);
    if (u_isalnum(cp)) {
      current.append(cp);
    } else {
      flush();
    }
    i += U16_LENGTH(cp);
  }
  flush();

  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

double jaccard_similarity(const TokenSet& a, const TokenSet& b) {
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia == *ib) {
      ++common;
      ++ia;
      ++ib;
    } else if (*ia < *ib) {
      ++ia;
    } else {
      ++ib;
    }
  }
  const std::size_t united = a.size() + b.size() - common;
  if (united == 0) return 0.0;
  return static_cast<double>(common) / static_cast<double>(united);
}

double jaccard_similarity(std::string_view a, std::string_view b) {
  return jaccard_similarity(token_set(a), token_set(b));
}

double diversity_reward(const TokenSet& question, std::span<const TokenSet> history,
                        const RewardConfig& cfg) {
  if (history.size() > cfg.history_capacity) {
    throw std::invalid_argument("history exceeds configured capacity");
  }
  if (history.empty()) return 1.0;
  const auto similar = std::count_if(history.begin(), history.end(), [&](const TokenSet& h) {
    return jaccard_similarity(question, h) > cfg.tau_sim;
  });
  return 1.0 - static_cast<double>(similar) / static_cast<double>(history.size());
}

double diversity_reward(std::string_view question, std::span<const std::string> history,
                        const RewardConfig& cfg) {
  std::vector<TokenSet> sets;
  sets.reserve(history.size());
  for (const auto& h : history) sets.push_back(token_set(h));
  return diversity_reward(token_set(question), sets, cfg);
}

bool passes_validity(double p, const RewardConfig& cfg) {
  return cfg.inclusive_tau_low ? p >= cfg.tau_low : p > cfg.tau_low;
}

ProposerRewardBreakdown proposer_reward(double p, double r_div, const RewardConfig& cfg,
                                        bool diversity_enabled) {
  require_unit(r_div, "diversity reward");
  ProposerRewardBreakdown out;
  out.passing_rate = p;
  out.difficulty = difficulty_reward(p);
  out.diversity = r_div;

  const bool valid = passes_validity(p, cfg);
  const bool diverse = !diversity_enabled || r_div >= cfg.tau_div;
  if (valid && diverse) {
    out.final = diversity_enabled ? out.difficulty + cfg.w_div * r_div : out.difficulty;
    out.clipped = false;
  } else {
    out.final = 0.0;
    out.clipped = true;
  }
  return out;
}

}  // namespace dualplay
