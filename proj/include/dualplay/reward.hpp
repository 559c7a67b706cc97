#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dualplay {

struct RewardConfig {
  double tau_low = 0.2;   // passing-rate validity threshold
  double tau_sim = 0.3;   // Jaccard similarity threshold
  double tau_div = 0.3;   // diversity clip threshold
  double w_div = 0.2;     // diversity weight
  std::size_t history_capacity = 100;
  // When true, validity is p >= tau_low instead of the default p > tau_low.
  bool inclusive_tau_low = false;

  void validate() const;
};

struct ProposerRewardBreakdown {
  double passing_rate = 0.0;
  double difficulty = 0.0;
  double diversity = 0.0;
  double final = 0.0;
  bool clipped = true;
};

/// Sorted, deduplicated tokens.
using TokenSet = std::vector<std::string>;

/// 1.1 - p. Throws std::invalid_argument for p outside [0, 1].
double difficulty_reward(double p);

/// NFC-normalize, case-fold, split on every non-alphanumeric code point,
/// drop empty fragments, deduplicate. Invalid UTF-8 bytes act as separators.
TokenSet token_set(std::string_view text);

/// |A ∩ B| / |A ∪ B|, defined as 0 when both sets are empty.
double jaccard_similarity(const TokenSet& a, const TokenSet& b);
double jaccard_similarity(std::string_view a, std::string_view b);

/// 1 - (#history entries with similarity > tau_sim) / |history|; 1 for an
/// empty history. Throws when history exceeds cfg.history_capacity.
double diversity_reward(const TokenSet& question, std::span<const TokenSet> history,
                        const RewardConfig& cfg);
double diversity_reward(std::string_view question, std::span<const std::string> history,
                        const RewardConfig& cfg);

/// Combined Proposer reward with the validity/diversity zero clip. With
/// diversity_enabled = false the weight is treated as 0 and the tau_div
/// clip is skipped.
ProposerRewardBreakdown proposer_reward(double p, double r_div, const RewardConfig& cfg,
                                        bool diversity_enabled = true);

inline double solver_reward(bool match) { return match ? 1.0 : 0.0; }

/// Question validity: p above tau_low (strict unless cfg.inclusive_tau_low).
bool passes_validity(double p, const RewardConfig& cfg);

/// Retention for Solver training: valid and p < 1.
inline bool is_retained(double p, const RewardConfig& cfg) {
  return passes_validity(p, cfg) && p < 1.0;
}

}  // namespace dualplay
