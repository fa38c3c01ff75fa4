#include <gtest/gtest.h>

#include <random>

#include "inteval/attribution.hpp"
#include "inteval/error.hpp"
#include "inteval/isr.hpp"
#include "isr_oracle.hpp"
#include "support.hpp"

using namespace inteval;
using namespace inteval::isr;
using attribution::Method;
using attribution::TokenScores;
using inteval::testkit::oracle_candidates;
using inteval::testkit::oracle_select;

namespace {

std::vector<double> random_scores(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 1);
  std::vector<double> s(n);
  for (auto& v : s) v = d(rng);
  return s;
}

model::LinearBowClassifier random_linear(int vocab, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 0.6);
  std::vector<double> w(static_cast<std::size_t>(vocab));
  for (auto& v : w) v = d(rng);
  return model::LinearBowClassifier(w, d(rng));
}

void expect_same_candidates(const std::vector<Candidate>& got,
                            const std::vector<testkit::OracleCandidate>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_EQ(got[k].span, want[k].span);
    EXPECT_NEAR(got[k].score, want[k].score, 1e-9);
  }
}

}  // namespace

TEST(Candidates, ThreeTokenExample) {
  const std::vector<double> s{1, 5, 2};
  const auto c = generate_candidates(s, 2, Method::kRandom);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].span, (Span{1, 3}));
  EXPECT_DOUBLE_EQ(c[0].score, 7.0);
  EXPECT_EQ(c[0].window, 2u);
}

TEST(Candidates, UniformScoresGiveNoCandidates) {
  const std::vector<double> s(30, 0.25);
  for (std::size_t l = 1; l <= 10; ++l) EXPECT_TRUE(generate_candidates(s, l, Method::kRandom).empty());
}

TEST(Candidates, LengthLimits) {
  const std::vector<double> s{1, 2, 3};
  EXPECT_TRUE(generate_candidates(s, 4, Method::kRandom).empty());
  EXPECT_THROW(generate_candidates(s, 0, Method::kRandom), ContractViolation);
  const std::vector<double> bad{1, std::nan(""), 3};
  EXPECT_THROW(generate_candidates(bad, 1, Method::kRandom), ContractViolation);
}

TEST(Candidates, OverlappingWindowsMergeWithAveragedScore) {
  // Windows of length 2 starting at 2, 3 and 4 survive and chain together.
  const std::vector<double> s{0, 0, 3, 3, 3, 3, 0, 0};
  const auto c = generate_candidates(s, 2, Method::kRandom);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].span, (Span{2, 6}));
  EXPECT_DOUBLE_EQ(c[0].score, 6.0);
}

TEST(Candidates, MatchBruteForceOnRandomVectors) {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scores(50, rng);
    for (std::size_t l = 5; l <= 8; ++l)
      expect_same_candidates(generate_candidates(s, l, Method::kLime), oracle_candidates(s, l));
  }
}

TEST(Candidates, InvariantUnderConstantShift) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_scores(40, rng);
    const auto before = generate_candidates(s, 6, Method::kRandom);
    for (auto& v : s) v += 3.5;
    const auto after = generate_candidates(s, 6, Method::kRandom);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t k = 0; k < before.size(); ++k) {
      EXPECT_EQ(before[k].span, after[k].span);
      EXPECT_NEAR(after[k].score - before[k].score, 6 * 3.5, 1e-9);
    }
  }
}

TEST(Candidates, SpansAreDisjointAndSorted) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_scores(60, rng);
    const auto c = generate_candidates(s, 5, Method::kRandom, ExecutionPolicy::kParallel);
    for (std::size_t k = 1; k < c.size(); ++k) EXPECT_LE(c[k - 1].span.end, c[k].span.start);
    for (const auto& x : c) EXPECT_GE(x.span.length(), 5u);
  }
}

TEST(MaxWindow, TwoAndAHalfPercentWithFloor) {
  EXPECT_EQ(max_window(1000, 0.025, 5), 25u);
  EXPECT_EQ(max_window(1001, 0.025, 5), 26u);
  EXPECT_EQ(max_window(100, 0.025, 5), 5u);
  EXPECT_EQ(max_window(199, 0.025, 5), 5u);
}

TEST(Budget, TakesBestFirstAndSkipsWhatDoesNotFit) {
  std::vector<Candidate> c{{{0, 6}, 6, 1.0, Method::kRandom},
                           {{10, 18}, 8, 5.0, Method::kRandom},
                           {{20, 26}, 6, 3.0, Method::kRandom}};
  EXPECT_EQ(take_within_budget(c, 14), (std::vector<Span>{{10, 18}, {20, 26}}));
  EXPECT_EQ(take_within_budget(c, 7), (std::vector<Span>{{20, 26}}));
  EXPECT_EQ(take_within_budget(c, 0).size(), 3u);
}

TEST(Select, SingleCandidateWinsInEitherMode) {
  std::vector<double> s(20, 0.0);
  for (std::size_t i = 8; i < 13; ++i) s[i] = 1.0;
  std::mt19937_64 rng(1);
  const auto model = random_linear(30, rng);
  const auto in = model::chunk_tokens(testkit::random_ids(20, 30, 2), "d", 16, 0);
  const auto cands = generate_candidates(s, 5, Method::kIntegratedGradients);
  ASSERT_EQ(cands.size(), 1u);
  for (SelectionMode mode : {SelectionMode::kSufficiency, SelectionMode::kComprehensiveness}) {
    IsrConfig cfg;
    cfg.mode = mode;
    cfg.budget_fraction = 0;
    const auto sel = select_rationales(model, in, {{"d", Method::kIntegratedGradients, s, 1}}, cfg);
    EXPECT_EQ(sel.rationale.spans, std::vector<Span>{cands[0].span});
    EXPECT_EQ(sel.rationale.chosen_method, "INTEGRATED_GRADIENTS");
    EXPECT_EQ(sel.rationale.technique, Technique::kIsr);
    EXPECT_FALSE(sel.fallback);
  }
}

TEST(Select, TwoMethodsTwoLengthsMatchExhaustiveEvaluation) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const auto model = random_linear(25, rng);
    const auto in = model::chunk_tokens(testkit::random_ids(20, 25, rng()), "d", 16, 0);
    const std::vector<std::vector<double>> raw{random_scores(20, rng), random_scores(20, rng)};
    std::vector<TokenScores> scores{{"d", Method::kLime, raw[0], 1}, {"d", Method::kDeepLift, raw[1], 1}};
    for (SelectionMode mode : {SelectionMode::kSufficiency, SelectionMode::kComprehensiveness}) {
      IsrConfig cfg;
      cfg.mode = mode;
      cfg.max_length_fraction = 0.3;  // N = 6, so lengths 5 and 6
      cfg.budget_fraction = 0;
      const auto sel = select_rationales(model, in, scores, cfg);
      EXPECT_EQ(sel.evaluated.size(), 4u);
      const auto want = oracle_select(model, in, raw, 5, 6, 0, mode == SelectionMode::kSufficiency);
      ASSERT_TRUE(want.has_value());
      EXPECT_EQ(sel.rationale.spans, want->spans);
      EXPECT_EQ(sel.rationale.chosen_method, attribution::to_string(scores[want->method].method));
      EXPECT_DOUBLE_EQ(sel.rationale.selection_divergence, want->divergence);
    }
  }
}

TEST(Select, MatchesOracleWithBudgetOnRandomInstances) {
  std::mt19937_64 rng(78);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 20 + rng() % 41;
    const std::size_t methods = 1 + rng() % 3;
    const auto model = random_linear(30, rng);
    const auto in = model::chunk_tokens(testkit::random_ids(n, 30, rng()), "d", 16, 0);
    std::vector<std::vector<double>> raw;
    std::vector<TokenScores> scores;
    for (std::size_t m = 0; m < methods; ++m) {
      raw.push_back(random_scores(n, rng));
      scores.push_back({"d", attribution::kAllMethods[m], raw.back(), 1});
    }
    IsrConfig cfg;
    cfg.max_length_fraction = 0.15;
    const auto sel = select_rationales(model, in, scores, cfg);
    const std::size_t budget = std::max<std::size_t>(5, n * 15 / 100);
    const auto want = oracle_select(model, in, raw, 5, max_window(n, 0.15, 5), budget, true);
    if (!want) {
      EXPECT_TRUE(sel.fallback);
      continue;
    }
    EXPECT_EQ(sel.rationale.spans, want->spans);
    for (const auto& sp : sel.rationale.spans) EXPECT_GE(sp.length(), 5u);
    EXPECT_LE(sel.rationale.token_count(), budget);
  }
}

TEST(Select, FallsBackToBestLengthFiveWindow) {
  std::mt19937_64 rng(3);
  const auto model = random_linear(30, rng);
  const auto in = model::chunk_tokens(testkit::random_ids(30, 30, 4), "d", 16, 0);
  const std::vector<double> flat(30, 1.0);
  const auto sel = select_rationales(model, in, {{"d", Method::kRandom, flat, 1}}, IsrConfig{});
  EXPECT_TRUE(sel.fallback);
  ASSERT_EQ(sel.rationale.spans.size(), 1u);
  EXPECT_EQ(sel.rationale.spans[0], (Span{0, 5}));
}

TEST(Select, DeterministicAndRejectsMismatchedScores) {
  std::mt19937_64 rng(5);
  const auto model = random_linear(30, rng);
  const auto in = model::chunk_tokens(testkit::random_ids(60, 30, 6), "d", 16, 0);
  std::vector<TokenScores> scores{{"d", Method::kLime, random_scores(60, rng), 1}};
  const auto a = select_rationales(model, in, scores, IsrConfig{});
  const auto b = select_rationales(model, in, scores, IsrConfig{});
  EXPECT_EQ(a.rationale.spans, b.rationale.spans);
  EXPECT_EQ(a.rationale.selection_divergence, b.rationale.selection_divergence);
  scores[0].scores.pop_back();
  EXPECT_THROW(select_rationales(model, in, scores, IsrConfig{}), ContractViolation);
}

TEST(Select, TieBreaksTowardFewerTokensThenSpanOrder) {
  Configuration a{Method::kLime, 0, 5, {{0, 5}}, 0.1};
  Configuration b{Method::kLime, 0, 6, {{0, 6}}, 0.1};
  Configuration c{Method::kLime, 1, 5, {{3, 8}}, 0.1};
  EXPECT_TRUE(better(a, b, SelectionMode::kSufficiency));
  EXPECT_TRUE(better(a, c, SelectionMode::kComprehensiveness));
  Configuration d = a;
  d.divergence = 0.05;
  EXPECT_TRUE(better(d, a, SelectionMode::kSufficiency));
  EXPECT_TRUE(better(a, d, SelectionMode::kComprehensiveness));
}

TEST(Select, FixtureRationalesCoverThePlantedCue) {
  const auto& fx = testkit::trained_fixture();
  int positives = 0, covered = 0;
  for (auto i : fx.test) {
    if (!fx.docs[i].cue) continue;
    const auto in = fx.input(i);
    if (fx.model->predict(in).predicted != kViolationClass) continue;
    std::vector<TokenScores> scores;
    for (Method m : attribution::kAllMethods)
      scores.push_back(attribution::attribute(*fx.model, in, m, attribution::AttributionConfig{}));
    const auto sel = select_rationales(*fx.model, in, scores, IsrConfig{});
    const Span cue = *fx.docs[i].cue;
    std::size_t hit = 0;
    for (std::size_t t = cue.start; t < cue.end; ++t)
      for (const auto& s : sel.rationale.spans) hit += s.contains(t);
    ++positives;
    covered += static_cast<double>(hit) >= 0.8 * static_cast<double>(cue.length());
  }
  ASSERT_GT(positives, 10);
  EXPECT_GE(static_cast<double>(covered) / positives, 0.8) << covered << "/" << positives;
}

TEST(Select, ModeNames) {
  EXPECT_EQ(selection_mode_from_string("comprehensiveness"), SelectionMode::kComprehensiveness);
  EXPECT_EQ(to_string(SelectionMode::kSufficiency), "sufficiency");
  EXPECT_THROW(selection_mode_from_string("max"), ValidationError);
}
