#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "collusion/detect.hpp"
#include "collusion/simulate.hpp"
#include "support.hpp"

namespace collusion {
namespace {

using testing::make_match;

SimConfig mid_config(std::uint64_t seed, std::size_t planted, double strength) {
  SimConfig cfg;
  cfg.num_players = 1000;
  cfg.num_matches = 600;
  cfg.colluder_pairs = planted;
  cfg.colluder_strength = strength;
  cfg.seed = seed;
  return cfg;
}

FlaggedPair flagged(const char* a, const char* b) {
  FlaggedPair f;
  f.pair = canonical_pair(a, b);
  return f;
}

std::string csv(const std::vector<FlaggedPair>& report) {
  std::ostringstream out;
  write_report_csv(out, report);
  return out.str();
}

TEST(DetectConfig, Defaults) {
  const DetectConfig cfg;
  EXPECT_EQ(cfg.min_shared_matches, 5u);
  EXPECT_EQ(cfg.forest.n_trees, 100u);
  EXPECT_EQ(cfg.forest.subsample, 1000u);
  EXPECT_EQ(cfg.threshold_mode, ThresholdMode::kScoreZero);
  EXPECT_TRUE(cfg.scale_features);
}

TEST(DetectConfig, Validation) {
  DetectConfig cfg;
  cfg.threshold_mode = ThresholdMode::kTopK;
  EXPECT_THROW(validate(cfg), Error);
  cfg.threshold_mode = ThresholdMode::kContamination;
  cfg.threshold_value = 1.5;
  EXPECT_THROW(validate(cfg), Error);
  EXPECT_EQ(parse_threshold_mode("top_k"), ThresholdMode::kTopK);
  EXPECT_THROW(parse_threshold_mode("median"), Error);
}

TEST(RunDetection, FullStrengthPlantedPairsInTopTwenty) {
  const auto [d, gt] = generate(mid_config(3, 5, 1.0));
  DetectConfig cfg;
  cfg.threshold_mode = ThresholdMode::kTopK;
  cfg.threshold_value = 20;
  const auto report = run_detection(d, cfg);
  ASSERT_EQ(report.size(), 20u);
  std::size_t found = 0;
  for (const FlaggedPair& f : report) found += gt.colluding_pairs.contains(f.pair) ? 1 : 0;
  EXPECT_EQ(found, 5u);
  for (std::size_t i = 0; i < report.size(); ++i) {
    EXPECT_EQ(report[i].rank_in_report, i + 1);
    if (i > 0) {
      EXPECT_LE(report[i - 1].score.value, report[i].score.value);
    }
  }
}

TEST(RunDetection, BackgroundOnlyFlagsFewPairsAtScoreZero) {
  double fraction = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SimConfig sim = mid_config(seed, 0, 0.0);
    sim.num_matches = 300;
    const auto [d, gt] = generate(sim);
    DetectConfig cfg;
    cfg.min_shared_matches = 2;
    const auto all = score_pairs(d, cfg);
    const auto flagged = apply_threshold(all, ThresholdMode::kScoreZero, 0.0);
    fraction += static_cast<double>(flagged.size()) / static_cast<double>(all.size());
  }
  EXPECT_LE(fraction / 10.0, 0.10);
}

TEST(RunDetection, DeterministicReportBytes) {
  const auto [d, gt] = generate(mid_config(4, 5, 0.9));
  DetectConfig cfg;
  cfg.threshold_mode = ThresholdMode::kTopK;
  cfg.threshold_value = 30;
  const std::string first = csv(run_detection(d, cfg));
  EXPECT_EQ(first, csv(run_detection(d, cfg)));
  cfg.threads = 3;
  EXPECT_EQ(first, csv(run_detection(d, cfg)));
}

TEST(RunDetection, TopKFlagSetsNest) {
  const auto [d, gt] = generate(mid_config(5, 5, 0.7));
  const auto ranked = score_pairs(d, DetectConfig{});
  for (std::size_t k = 1; k < 40; ++k) {
    const auto small = apply_threshold(ranked, ThresholdMode::kTopK, static_cast<double>(k));
    const auto large = apply_threshold(ranked, ThresholdMode::kTopK, static_cast<double>(k + 1));
    ASSERT_EQ(small.size() + 1, large.size());
    EXPECT_TRUE(std::equal(small.begin(), small.end(), large.begin()));
  }
  double last = 0.0;
  for (std::size_t k = 1; k <= ranked.size(); k += 7) {
    const double r = evaluate(ranked, gt, k).recall_at_k;
    EXPECT_GE(r, last);
    last = r;
  }
  const auto contamination = apply_threshold(ranked, ThresholdMode::kContamination, 0.1);
  EXPECT_EQ(contamination.size(), static_cast<std::size_t>(std::ceil(0.1 * ranked.size())));
}

TEST(RunDetection, FilterLeavingNothingIsEmptyAfterFilter) {
  Dataset d;
  d.matches.push_back(make_match("m0", 0, {{1, {"a", "b"}}, {2, {"c", "d"}}}));
  try {
    run_detection(d, DetectConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyAfterFilter);
  }
}

TEST(Evaluate, Examples) {
  std::vector<FlaggedPair> report;
  GroundTruth gt;
  for (int i = 0; i < 20; ++i) {
    const std::string a = "a" + std::to_string(i), b = "b" + std::to_string(i);
    gt.colluding_pairs.insert(canonical_pair(a, b));
    report.push_back(i < 16 ? flagged(a.c_str(), b.c_str())
                            : flagged(("x" + a).c_str(), ("x" + b).c_str()));
  }
  const EvalResult r = evaluate(report, gt, 20);
  EXPECT_DOUBLE_EQ(r.precision_at_k, 0.8);
  EXPECT_DOUBLE_EQ(r.recall_at_k, 0.8);

  const std::vector<FlaggedPair> exact = {flagged("a", "b"), flagged("c", "d")};
  const GroundTruth both{{canonical_pair("a", "b"), canonical_pair("c", "d")}};
  EXPECT_EQ(evaluate(exact, both, 2).recall_at_k, 1.0);
  EXPECT_EQ(evaluate(exact, both, 2).precision_at_k, 1.0);
  const GroundTruth other{{canonical_pair("e", "f")}};
  EXPECT_EQ(evaluate(exact, other, 2).recall_at_k, 0.0);
  EXPECT_EQ(evaluate(exact, other, 2).precision_at_k, 0.0);
  EXPECT_EQ(evaluate(exact, both, 10).k, 2u);
}

// Five matches, hand-counted:
//   m0: [a b] r1 vs [c d] r2      m1: [a c] r2 vs [b d] r1
//   m2: [a b] r1 vs [c e] r2      m3: [a d] r1 vs [b c] r2
//   m4: [c d] r2 vs [a e] r1
// All landings are on the x axis: a=0, b=3, c=4, d=10, e=6.
TEST(Summarize, HandCountedFixture) {
  const std::map<std::string, Position> where = {
      {"a", {0, 0}}, {"b", {3, 0}}, {"c", {4, 0}}, {"d", {10, 0}}, {"e", {6, 0}}};
  Dataset d;
  d.matches = {make_match("m0", 0, {{1, {"a", "b"}}, {2, {"c", "d"}}}, where),
               make_match("m1", 1, {{2, {"a", "c"}}, {1, {"b", "d"}}}, where),
               make_match("m2", 2, {{1, {"a", "b"}}, {2, {"c", "e"}}}, where),
               make_match("m3", 3, {{1, {"a", "d"}}, {2, {"b", "c"}}}, where),
               make_match("m4", 4, {{2, {"c", "d"}}, {1, {"a", "e"}}}, where)};
  d.friendships.insert(canonical_pair("d", "e"));
  const DatasetStats st = summarize(d);
  EXPECT_EQ(st.matches, 5u);
  EXPECT_EQ(st.players, 5u);
  EXPECT_EQ(st.friendships, 1u);
  // Teammate pairs: ab(2) cd(2) ac bd ce ad bc ae -> 8 pairs, 10 meetings.
  EXPECT_EQ(st.teammates.pairs, 8u);
  EXPECT_DOUBLE_EQ(st.teammates.avg_matches, 10.0 / 8.0);
  EXPECT_EQ(st.teammates.max_matches, 2u);
  // Mean over pairs of the per-pair mean teammate distance.
  const double team_dist = (3 + 6 + 4 + 7 + 2 + 10 + 1 + 6) / 8.0;
  EXPECT_DOUBLE_EQ(st.teammates.avg_distance, team_dist);
  // Opponent meetings: ac4 ad3 bc3 bd2 ab2 cd2 ae1 be1 ce1 de1 -> 10 pairs,
  // 20 meetings. Two-team matches put every opponent pair one rank apart.
  EXPECT_EQ(st.opponents.pairs, 10u);
  EXPECT_DOUBLE_EQ(st.opponents.avg_matches, 2.0);
  EXPECT_EQ(st.opponents.max_matches, 4u);
  EXPECT_DOUBLE_EQ(st.opponents.avg_distance, (4 + 10 + 1 + 7 + 3 + 6 + 6 + 3 + 2 + 4) / 10.0);
  EXPECT_DOUBLE_EQ(st.opponents.avg_rank_diff.value(), 1.0);
  // ac meets in m2..m4 and bc in m0..m2, both consecutive for each player.
  EXPECT_EQ(st.opponents.streak3_pairs, 2u);
  EXPECT_EQ(st.teammates.streak3_pairs, 0u);
  // ab cd ac bd ad bc by play; de by friendship; ce and ae fall short of 3.
  EXPECT_EQ(st.acquaintances, 7u);
}

TEST(Summarize, EmptyFriendshipsAndSingleContextHaveNoAcquaintances) {
  Dataset d;
  for (int m = 0; m < 4; ++m) {
    d.matches.push_back(make_match("m" + std::to_string(m), m, {{1, {"a", "b"}}, {2, {"c", "d"}}}));
  }
  EXPECT_EQ(summarize(d).acquaintances, 0u);
}

TEST(ReportCsv, FormatAndRoundTrip) {
  const auto [d, gt] = generate(mid_config(6, 4, 0.9));
  DetectConfig cfg;
  cfg.threshold_mode = ThresholdMode::kTopK;
  cfg.threshold_value = 12;
  const auto report = run_detection(d, cfg);
  const std::string text = csv(report);
  EXPECT_EQ(text.substr(0, text.find('\n')), kReportHeader);
  std::istringstream in(text);
  const auto back = read_report_csv(in);
  ASSERT_EQ(back.size(), report.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].pair, report[i].pair);
    EXPECT_EQ(back[i].score, report[i].score);
    EXPECT_EQ(back[i].features.avg_distance_opp, report[i].features.avg_distance_opp);
    EXPECT_EQ(back[i].features.num_matches_opp, report[i].features.num_matches_opp);
    EXPECT_EQ(back[i].dominant_feature, report[i].dominant_feature);
  }
  EXPECT_EQ(format_score(-0.1734), "-0.173");
  EXPECT_EQ(format_score(-0.0001), "0.000");
  EXPECT_EQ(format_double(0.1), "0.1");
}

}  // namespace
}  // namespace collusion
