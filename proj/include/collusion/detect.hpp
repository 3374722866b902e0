#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "collusion/core_model.hpp"
#include "collusion/iforest.hpp"
#include "collusion/ingest.hpp"
#include "collusion/pairwise_features.hpp"
#include "collusion/simulate.hpp"

namespace collusion {

enum class ThresholdMode { kScoreZero, kTopK, kContamination };

inline std::string_view to_string(ThresholdMode m) {
  switch (m) {
    case ThresholdMode::kScoreZero: return "score_zero";
    case ThresholdMode::kTopK: return "top_k";
    case ThresholdMode::kContamination: return "contamination";
  }
  return "?";
}

inline ThresholdMode parse_threshold_mode(std::string_view s) {
  if (s == "score_zero") return ThresholdMode::kScoreZero;
  if (s == "top_k") return ThresholdMode::kTopK;
  if (s == "contamination") return ThresholdMode::kContamination;
  throw Error(ErrorCode::kConfigError, "unknown threshold mode '" + std::string(s) + "'");
}

struct DetectConfig {
  std::size_t min_shared_matches = 5;
  std::size_t min_player_matches = 3;
  iforest::ForestParams forest;
  ThresholdMode threshold_mode = ThresholdMode::kScoreZero;
  /// k for top_k, fraction q for contamination; unused for score_zero.
  double threshold_value = 0.0;
  bool scale_features = true;
  AcquaintanceRule acquaintance;
  std::size_t threads = 1;
};

inline void validate(const DetectConfig& cfg) {
  if (cfg.min_shared_matches < 1) throw Error(ErrorCode::kConfigError, "min_shared_matches < 1");
  if (cfg.min_player_matches < 1) throw Error(ErrorCode::kConfigError, "min_player_matches < 1");
  if (cfg.threshold_mode != ThresholdMode::kScoreZero && !(cfg.threshold_value > 0.0)) {
    throw Error(ErrorCode::kConfigError, "threshold_value must be > 0 for " +
                                             std::string(to_string(cfg.threshold_mode)));
  }
  if (cfg.threshold_mode == ThresholdMode::kContamination && cfg.threshold_value > 1.0) {
    throw Error(ErrorCode::kConfigError, "contamination must lie in (0, 1]");
  }
}

struct FlaggedPair {
  PairKey pair;
  iforest::AnomalyScore score;
  PairFeatures features;
  std::size_t rank_in_report = 0;
  std::string dominant_feature;

  bool operator==(const FlaggedPair&) const = default;
};

struct EvalResult {
  double recall_at_k = 0.0;
  double precision_at_k = 0.0;
  std::size_t planted_found = 0;
  std::size_t k = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace detail

struct DetectionRun {
  /// Every qualifying pair, most anomalous first (ties by PairKey).
  std::vector<FlaggedPair> ranked;
  iforest::ForestModel model;
};

/// Fits the forest on every qualifying opponent pair and scores them all.
/// Throws EmptyAfterFilter naming the filter that left too little to fit.
inline DetectionRun detect_all(const Dataset& d, const DetectConfig& cfg) {
  validate(cfg);
  const Dataset filtered = filter_active_players(d, cfg.min_player_matches);
  if (filtered.inactive.size() == appearance_counts(filtered).size()) {
    throw Error(ErrorCode::kEmptyAfterFilter,
                "min_player_matches=" + std::to_string(cfg.min_player_matches) +
                    " removed every player");
  }
  ExtractOptions xopts{cfg.acquaintance, cfg.threads};
  std::vector<PairFeatures> pairs =
      extract_pairs(filtered, cfg.min_shared_matches, PairContext::kOpponent, xopts);
  if (pairs.size() < 2) {
    throw Error(ErrorCode::kEmptyAfterFilter,
                "min_shared_matches=" + std::to_string(cfg.min_shared_matches) + " left " +
                    std::to_string(pairs.size()) + " opponent pairs (need >= 2)");
  }

  iforest::Matrix data(pairs.size(), kDetectorFeatureCount);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto v = detector_vector(pairs[i]);
    std::copy(v.begin(), v.end(), data.row(i).begin());
  }
  auto model = iforest::fit(data, cfg.forest, {cfg.scale_features, cfg.threads});
  const auto scores = model.score_all(data, cfg.threads);

  // Triage hint: the feature furthest from the population median once
  // min-max scaled.
  const auto& ranges = model.feature_ranges();
  std::vector<double> medians(kDetectorFeatureCount);
  for (std::size_t c = 0; c < kDetectorFeatureCount; ++c) {
    std::vector<double> column(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      column[i] = iforest::scale_value(data(i, c), ranges[c]);
    }
    medians[c] = detail::median(std::move(column));
  }

  std::vector<FlaggedPair> ranked(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t best = 0;
    double best_dev = -1.0;
    for (std::size_t c = 0; c < kDetectorFeatureCount; ++c) {
      const double dev = std::abs(iforest::scale_value(data(i, c), ranges[c]) - medians[c]);
      if (dev > best_dev) {
        best_dev = dev;
        best = c;
      }
    }
    ranked[i].pair = pairs[i].pair;
    ranked[i].score = scores[i];
    ranked[i].dominant_feature = std::string(kDetectorFeatureNames[best]);
    ranked[i].features = std::move(pairs[i]);
  }
  std::sort(ranked.begin(), ranked.end(), [](const FlaggedPair& l, const FlaggedPair& r) {
    if (l.score.value != r.score.value) return l.score.value < r.score.value;
    return l.pair < r.pair;
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank_in_report = i + 1;
  return {std::move(ranked), std::move(model)};
}

inline std::vector<FlaggedPair> score_pairs(const Dataset& d, const DetectConfig& cfg) {
  return detect_all(d, cfg).ranked;
}

/// Keeps the prefix of a ranked list selected by the threshold mode.
inline std::vector<FlaggedPair> apply_threshold(std::vector<FlaggedPair> ranked,
                                                ThresholdMode mode, double value) {
  std::size_t keep = 0;
  switch (mode) {
    case ThresholdMode::kScoreZero:
      while (keep < ranked.size() && ranked[keep].score.value < 0.0) ++keep;
      break;
    case ThresholdMode::kTopK:
      keep = static_cast<std::size_t>(std::floor(value));
      break;
    case ThresholdMode::kContamination:
      keep = static_cast<std::size_t>(std::ceil(value * static_cast<double>(ranked.size())));
      break;
  }
  ranked.resize(std::min(keep, ranked.size()));
  return ranked;
}

inline std::vector<FlaggedPair> run_detection(const Dataset& d, const DetectConfig& cfg) {
  return apply_threshold(score_pairs(d, cfg), cfg.threshold_mode, cfg.threshold_value);
}

/// Flagged pairs plus the model that scored them.
inline DetectionRun run_detection_with_model(const Dataset& d, const DetectConfig& cfg) {
  DetectionRun run = detect_all(d, cfg);
  run.ranked = apply_threshold(std::move(run.ranked), cfg.threshold_mode, cfg.threshold_value);
  return run;
}

/// Recall and precision of the report's first k entries against planted
/// pairs. A k beyond the report length is clamped to the report length.
inline EvalResult evaluate(const std::vector<FlaggedPair>& report, const GroundTruth& gt,
                           std::size_t k) {
  EvalResult r;
  r.k = std::min(k, report.size());
  for (std::size_t i = 0; i < r.k; ++i) {
    if (gt.colluding_pairs.contains(report[i].pair)) ++r.planted_found;
  }
  if (!gt.colluding_pairs.empty()) {
    r.recall_at_k = static_cast<double>(r.planted_found) / gt.colluding_pairs.size();
  }
  if (r.k > 0) r.precision_at_k = static_cast<double>(r.planted_found) / r.k;
  return r;
}

struct ContextStats {
  std::size_t pairs = 0;
  double avg_matches = 0.0;
  std::size_t max_matches = 0;
  double avg_distance = 0.0;
  std::optional<double> avg_rank_diff;
  std::size_t streak3_pairs = 0;

  bool operator==(const ContextStats&) const = default;
};

/// Gameplay panel: pair counts and per-pair averages split by context.
struct DatasetStats {
  std::size_t matches = 0;
  std::size_t players = 0;
  std::size_t friendships = 0;
  ContextStats teammates;
  ContextStats opponents;
  std::size_t acquaintances = 0;

  bool operator==(const DatasetStats&) const = default;
};

inline DatasetStats summarize(const Dataset& d, const AcquaintanceRule& rule = {},
                              std::size_t threads = 1) {
  DatasetStats st;
  st.matches = d.matches.size();
  st.friendships = d.friendships.size();
  for (const auto& [player, count] : appearance_counts(d)) st.players += d.is_active(player) ? 1 : 0;

  struct Acc {
    double matches = 0, distance = 0, rank = 0;
  } team_acc, opp_acc;
  std::set<PairKey> known;
  for (const PairFeatures& f : compute_pair_table(d, {rule, threads})) {
    if (f.acquaintance) known.insert(f.pair);
    if (f.num_matches_team > 0) {
      ++st.teammates.pairs;
      team_acc.matches += static_cast<double>(f.num_matches_team);
      team_acc.distance += f.avg_distance_team.value_or(0.0);
      st.teammates.max_matches = std::max(st.teammates.max_matches, f.num_matches_team);
      if (f.max_consecutive_team >= 3) ++st.teammates.streak3_pairs;
    }
    if (f.num_matches_opp > 0) {
      ++st.opponents.pairs;
      opp_acc.matches += static_cast<double>(f.num_matches_opp);
      opp_acc.distance += f.avg_distance_opp;
      opp_acc.rank += f.avg_rank_diff_opp;
      st.opponents.max_matches = std::max(st.opponents.max_matches, f.num_matches_opp);
      if (f.max_consecutive_opp >= 3) ++st.opponents.streak3_pairs;
    }
  }
  // Friendships count even without any shared match.
  for (const PairKey& k : d.friendships) {
    if (d.is_active(k.a()) && d.is_active(k.b())) known.insert(k);
  }
  st.acquaintances = known.size();
  if (st.teammates.pairs > 0) {
    const double n = static_cast<double>(st.teammates.pairs);
    st.teammates.avg_matches = team_acc.matches / n;
    st.teammates.avg_distance = team_acc.distance / n;
  }
  if (st.opponents.pairs > 0) {
    const double n = static_cast<double>(st.opponents.pairs);
    st.opponents.avg_matches = opp_acc.matches / n;
    st.opponents.avg_distance = opp_acc.distance / n;
    st.opponents.avg_rank_diff = opp_acc.rank / n;
  }
  return st;
}

inline nlohmann::ordered_json stats_to_json(const DatasetStats& st) {
  using nlohmann::ordered_json;
  auto ctx = [](const ContextStats& c) {
    ordered_json j;
    j["pairs"] = c.pairs;
    j["avg_matches"] = c.avg_matches;
    j["max_matches"] = c.max_matches;
    j["avg_distance"] = c.avg_distance;
    j["avg_rank_diff"] = c.avg_rank_diff ? ordered_json(*c.avg_rank_diff) : ordered_json(nullptr);
    j["streak3_pairs"] = c.streak3_pairs;
    return j;
  };
  ordered_json j;
  j["matches"] = st.matches;
  j["players"] = st.players;
  j["friendships"] = st.friendships;
  j["acquaintances"] = st.acquaintances;
  j["teammates"] = ctx(st.teammates);
  j["opponents"] = ctx(st.opponents);
  return j;
}

// ---------------------------------------------------------------------------
// Report files

inline constexpr const char* kReportHeader =
    "rank,pair_a,pair_b,acquaintance,rank_difference,max_consec_games,proximity,matches,"
    "anomaly_score,dominant_feature,score_exact";

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Three decimals, as displayed to reviewers (e.g. "-0.173").
inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

inline void write_report_csv(std::ostream& out, const std::vector<FlaggedPair>& report) {
  out << kReportHeader << '\n';
  for (const FlaggedPair& f : report) {
    out << f.rank_in_report << ',' << f.pair.a().value << ',' << f.pair.b().value << ','
        << (f.features.acquaintance ? "TRUE" : "FALSE") << ','
        << format_double(f.features.avg_rank_diff_opp) << ',' << f.features.max_consecutive_opp
        << ',' << format_double(f.features.avg_distance_opp) << ',' << f.features.num_matches_opp
        << ',' << format_score(f.score.value) << ',' << f.dominant_feature << ','
        << format_double(f.score.value) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failure on report stream");
}

inline nlohmann::ordered_json flagged_to_json(const FlaggedPair& f) {
  nlohmann::ordered_json j;
  j["rank"] = f.rank_in_report;
  j["pair_a"] = f.pair.a().value;
  j["pair_b"] = f.pair.b().value;
  j["acquaintance"] = f.features.acquaintance;
  j["rank_difference"] = f.features.avg_rank_diff_opp;
  j["max_consec_games"] = f.features.max_consecutive_opp;
  j["proximity"] = f.features.avg_distance_opp;
  j["matches"] = f.features.num_matches_opp;
  j["anomaly_score"] = format_score(f.score.value);
  j["dominant_feature"] = f.dominant_feature;
  j["score_exact"] = f.score.value;
  return j;
}

inline void write_report_jsonl(std::ostream& out, const std::vector<FlaggedPair>& report) {
  for (const FlaggedPair& f : report) out << flagged_to_json(f).dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failure on report stream");
}

namespace detail {

inline double parse_double_field(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bad number '" + s + "' in report");
  }
  return v;
}

inline std::size_t parse_count_field(const std::string& s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bad count '" + s + "' in report");
  }
  return v;
}

}  // namespace detail

/// Reads a report written by write_report_csv. Feature fields that the CSV
/// does not carry (teammate counts, match ids) are left empty.
inline std::vector<FlaggedPair> read_report_csv(std::istream& in) {
  if (!in) throw Error(ErrorCode::kIoError, "report stream is not readable");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kReportHeader) {
    throw Error(ErrorCode::kInvalidArgument, "report header mismatch");
  }
  std::vector<FlaggedPair> out;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 11) {
      throw Error(ErrorCode::kInvalidArgument, "report row has " + std::to_string(cells.size()) +
                                                   " cells: " + line);
    }
    FlaggedPair f;
    f.rank_in_report = detail::parse_count_field(cells[0]);
    f.pair = canonical_pair(cells[1], cells[2]);
    f.features.pair = f.pair;
    if (cells[3] != "TRUE" && cells[3] != "FALSE") {
      throw Error(ErrorCode::kInvalidArgument, "acquaintance must be TRUE/FALSE");
    }
    f.features.acquaintance = cells[3] == "TRUE";
    f.features.avg_rank_diff_opp = detail::parse_double_field(cells[4]);
    f.features.max_consecutive_opp = detail::parse_count_field(cells[5]);
    f.features.avg_distance_opp = detail::parse_double_field(cells[6]);
    f.features.num_matches_opp = detail::parse_count_field(cells[7]);
    f.dominant_feature = cells[9];
    f.score.value = detail::parse_double_field(cells[10]);
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<FlaggedPair> load_report(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_report_csv(in);
}

}  // namespace collusion
