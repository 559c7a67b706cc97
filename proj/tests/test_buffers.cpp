#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <stdexcept>

#include "dualplay/buffers.hpp"
#include "support.hpp"

namespace dualplay {
namespace {

QAPair pair(const std::string& q) {
  return extract_qa_pair("<problem>" + q + "</problem><answer>\\boxed{1}</answer>", 0);
}

TEST(History, FifoTruncation) {
  HistoryBuffer h(2);
  h.push("a");
  EXPECT_EQ(h.size(), 1u);
  h.push("b");
  h.push("c");
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h.entries()[0], "b");
  EXPECT_EQ(h.entries()[1], "c");
}

TEST(History, DefaultCapacityDropsFirst) {
  HistoryBuffer h(100);
  for (int i = 0; i < 101; ++i) h.push("q" + std::to_string(i));
  EXPECT_EQ(h.size(), 100u);
  EXPECT_EQ(h.entries().front(), "q1");
  EXPECT_EQ(h.entries().back(), "q100");
}

TEST(History, PropertyNeverExceedsCapacity) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cap = 1 + rng.uniform_index(10);
    HistoryBuffer h(cap);
    std::vector<std::string> model;
    for (int i = 0; i < 40; ++i) {
      const auto q = testing::random_sentence(rng, 4);
      h.push(q);
      model.push_back(q);
      if (model.size() > cap) model.erase(model.begin());
      ASSERT_LE(h.size(), cap);
      ASSERT_EQ(std::vector<std::string>(h.entries().begin(), h.entries().end()), model);
      ASSERT_EQ(h.token_sets().size(), h.size());
    }
  }
}

TEST(History, DiversityMatchesFreeFunction) {
  HistoryBuffer h(3);
  RewardConfig cfg;
  for (const char* q : {"alpha beta", "alpha gamma", "delta"}) h.push(q);
  const std::vector<std::string> window(h.entries().begin(), h.entries().end());
  EXPECT_EQ(h.diversity(token_set("alpha beta"), cfg), diversity_reward("alpha beta", window, cfg));
}

TEST(QuestionBuffer, AddInitializesEntry) {
  QuestionBuffer b;
  RewardConfig cfg;
  const auto& e = b.add(pair("q"), 0.5, 3, cfg);
  EXPECT_EQ(e.peak_passing_rate, 0.5);
  EXPECT_EQ(e.replay_count, 0u);
  EXPECT_EQ(e.stagnation_count, 0u);
  EXPECT_EQ(e.admitted_at, 3u);
}

TEST(QuestionBuffer, AddRejectsUnretained) {
  QuestionBuffer b;
  RewardConfig cfg;
  EXPECT_THROW(b.add(pair("q"), 1.0, 0, cfg), std::logic_error);
  EXPECT_THROW(b.add(pair("q"), 0.2, 0, cfg), std::logic_error);
  EXPECT_THROW(b.add(extract_qa_pair("junk", 0), 0.5, 0, cfg), std::logic_error);
  cfg.inclusive_tau_low = true;
  EXPECT_NO_THROW(b.add(pair("q"), 0.2, 0, cfg));
}

TEST(QuestionBuffer, CircularReplay) {
  QuestionBuffer b;
  RewardConfig cfg;
  const auto e1 = b.add(pair("1"), 0.5, 0, cfg).entry_id;
  const auto e2 = b.add(pair("2"), 0.5, 0, cfg).entry_id;
  const auto e3 = b.add(pair("3"), 0.5, 0, cfg).entry_id;
  EXPECT_EQ(b.replay(2), (std::vector<std::uint64_t>{e1, e2}));
  EXPECT_EQ(b.replay(2), (std::vector<std::uint64_t>{e3, e1}));
  EXPECT_EQ(b.find(e1)->replay_count, 2u);
}

TEST(QuestionBuffer, SingletonWraps) {
  QuestionBuffer b;
  RewardConfig cfg;
  const auto e = b.add(pair("1"), 0.5, 0, cfg).entry_id;
  EXPECT_EQ(b.replay(3), (std::vector<std::uint64_t>{e, e, e}));
  EXPECT_EQ(b.find(e)->replay_count, 3u);
}

TEST(QuestionBuffer, EmptyReplaySignalsExhaustion) {
  QuestionBuffer b;
  EXPECT_THROW(b.replay(1), BufferExhausted);
}

TEST(QuestionBuffer, PropertyKCyclesVisitEachEntryKTimes) {
  Rng rng(32);
  RewardConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    QuestionBuffer b;
    const std::size_t n = 1 + rng.uniform_index(12);
    for (std::size_t i = 0; i < n; ++i) b.add(pair("q" + std::to_string(i)), 0.5, 0, cfg);
    const std::size_t k = 1 + rng.uniform_index(5);
    const std::size_t batch = 1 + rng.uniform_index(7);
    std::map<std::uint64_t, std::size_t> visits;
    std::size_t taken = 0;
    // Drawing k*n occurrences in arbitrary batch sizes covers k full cycles.
    while (taken < k * n) {
      const std::size_t want = std::min(batch, k * n - taken);
      for (auto id : b.replay(want)) ++visits[id];
      taken += want;
    }
    ASSERT_EQ(visits.size(), n);
    for (const auto& [id, count] : visits) {
      EXPECT_EQ(count, k);
      EXPECT_EQ(b.find(id)->replay_count, k);
    }
  }
}

TEST(QuestionBuffer, RemoveKeepsCursorOnNextEntry) {
  QuestionBuffer b;
  RewardConfig cfg;
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(b.add(pair(std::to_string(i)), 0.5, 0, cfg).entry_id);
  EXPECT_EQ(b.replay(2), (std::vector<std::uint64_t>{ids[0], ids[1]}));
  EXPECT_TRUE(b.remove(ids[1]));
  EXPECT_FALSE(b.remove(ids[1]));
  EXPECT_EQ(b.replay(2), (std::vector<std::uint64_t>{ids[2], ids[3]}));
  EXPECT_TRUE(b.remove(ids[0]));
  EXPECT_EQ(b.replay(3), (std::vector<std::uint64_t>{ids[2], ids[3], ids[2]}));
}

TEST(QuestionBuffer, CheckpointRoundTripIsExact) {
  QuestionBuffer b;
  RewardConfig cfg;
  for (int i = 0; i < 5; ++i) b.add(pair("question " + std::to_string(i)), 0.5, i, cfg);
  b.replay(3);
  b.remove(b.entries()[1].entry_id);
  EvictionPolicy policy;
  buffer_evict_check(*b.find(b.entries()[0].entry_id), 0.4, policy);

  std::stringstream ss;
  b.save(ss);
  auto restored = QuestionBuffer::load(ss);
  std::stringstream again;
  restored.save(again);
  EXPECT_EQ(ss.str(), again.str());
  EXPECT_EQ(restored.cursor(), b.cursor());
  EXPECT_EQ(restored.replay(4), b.replay(4));
  EXPECT_EQ(restored.add(pair("new"), 0.5, 9, cfg).entry_id, b.add(pair("new"), 0.5, 9, cfg).entry_id);
}

TEST(Eviction, PerfectRateEvicts) {
  QuestionBufferEntry e;
  e.peak_passing_rate = 0.5;
  EXPECT_EQ(buffer_evict_check(e, 1.0, {true, 3}), EvictDecision::evict);
}

TEST(Eviction, StagnationEvictsOnThird) {
  QuestionBufferEntry e;
  e.peak_passing_rate = 0.5;
  const EvictionPolicy policy{true, 3};
  EXPECT_EQ(buffer_evict_check(e, 0.5, policy), EvictDecision::keep);
  EXPECT_EQ(buffer_evict_check(e, 1.0 / 3.0, policy), EvictDecision::keep);
  EXPECT_EQ(buffer_evict_check(e, 0.5, policy), EvictDecision::evict);
}

TEST(Eviction, NewPeakResets) {
  QuestionBufferEntry e;
  e.peak_passing_rate = 0.5;
  const EvictionPolicy policy{true, 3};
  buffer_evict_check(e, 0.4, policy);
  buffer_evict_check(e, 0.4, policy);
  EXPECT_EQ(buffer_evict_check(e, 0.7, policy), EvictDecision::keep);
  EXPECT_EQ(e.peak_passing_rate, 0.7);
  EXPECT_EQ(e.stagnation_count, 0u);
}

TEST(Eviction, DisabledKeepsButTracks) {
  QuestionBufferEntry e;
  e.peak_passing_rate = 0.5;
  const EvictionPolicy off{false, 3};
  EXPECT_EQ(buffer_evict_check(e, 1.0, off), EvictDecision::keep);
  EXPECT_EQ(e.peak_passing_rate, 1.0);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(buffer_evict_check(e, 0.2, off), EvictDecision::keep);
  EXPECT_EQ(e.stagnation_count, 5u);
}

TEST(Eviction, PropertyStrictlyIncreasingNeverEvicts) {
  Rng rng(33);
  for (int trial = 0; trial < 1000; ++trial) {
    QuestionBufferEntry e;
    e.peak_passing_rate = 0.3 * rng.uniform01();
    double rate = e.peak_passing_rate;
    for (int i = 0; i < 10; ++i) {
      rate += (0.999 - rate) * (0.05 + 0.5 * rng.uniform01());
      ASSERT_LT(rate, 1.0);
      EXPECT_EQ(buffer_evict_check(e, rate, {true, 1 + rng.uniform_index(4)}), EvictDecision::keep);
    }
  }
}

TEST(Eviction, PropertyMatchesReferenceModel) {
  Rng rng(34);
  for (int trial = 0; trial < 2000; ++trial) {
    QuestionBufferEntry e;
    e.peak_passing_rate = static_cast<double>(1 + rng.uniform_index(4)) / 6.0;
    const std::size_t c = 1 + rng.uniform_index(4);
    double peak = e.peak_passing_rate;
    std::size_t stagnant = 0;
    for (int i = 0; i < 12; ++i) {
      const double rate = static_cast<double>(rng.uniform_index(7)) / 6.0;
      bool expect_evict;
      if (rate > peak) {
        peak = rate;
        stagnant = 0;
        expect_evict = rate == 1.0;
      } else {
        ++stagnant;
        expect_evict = rate == 1.0 || stagnant >= c;
      }
      const auto got = buffer_evict_check(e, rate, {true, c});
      ASSERT_EQ(got == EvictDecision::evict, expect_evict);
      if (expect_evict) break;
    }
  }
}

}  // namespace
}  // namespace dualplay
