#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "collusion/core_model.hpp"
#include "collusion/parallel.hpp"

namespace collusion {

inline constexpr const char* kMatchLogFile = "matches.jsonl";
inline constexpr const char* kFriendshipFile = "friendships.csv";
inline constexpr const char* kGroundTruthFile = "ground_truth.csv";

struct IngestViolation {
  std::string match_id;
  Violation violation;

  bool operator==(const IngestViolation&) const = default;
};

struct IngestReport {
  std::size_t matches_accepted = 0;
  std::size_t matches_rejected = 0;
  std::vector<IngestViolation> violations;
  std::size_t players_seen = 0;
};

struct IngestOptions {
  std::size_t min_team_size = 2;
  std::size_t threads = 1;
};

namespace detail {

struct ParsedLine {
  std::optional<MatchRecord> match;
  std::string label;
  std::vector<Violation> violations;
};

inline ParsedLine parse_match_line(const std::string& line, std::size_t line_no,
                                   std::size_t min_team_size) {
  using nlohmann::json;
  ParsedLine out;
  out.label = "line:" + std::to_string(line_no);
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    out.violations.push_back(Violation::kMalformedRecord);
    return out;
  }
  try {
    MatchRecord m;
    m.match_id = j.at("match_id").get<std::string>();
    if (!m.match_id.empty()) out.label = m.match_id;
    auto ts = parse_utc(j.at("start_time").get<std::string>());
    if (!ts) throw std::invalid_argument("start_time");
    m.start_time = *ts;
    for (const json& jt : j.at("teams")) {
      Team t;
      t.index = jt.at("index").get<int>();
      t.rank = jt.at("rank").get<int>();
      for (const json& p : jt.at("players")) t.players.emplace_back(p.get<std::string>());
      m.teams.push_back(std::move(t));
    }
    for (const auto& [id, xy] : j.at("landings").items()) {
      if (!xy.is_array() || xy.size() != 2) throw std::invalid_argument("landing");
      m.landings.emplace(PlayerId(id), Position{xy[0].get<double>(), xy[1].get<double>()});
    }
    out.violations = validate_match(m, min_team_size);
    if (out.violations.empty()) out.match = std::move(m);
  } catch (const std::exception&) {
    out.violations = {Violation::kMalformedRecord};
  }
  return out;
}

}  // namespace detail

/// Reject-and-continue parse of a line-delimited match log. Blank lines are
/// ignored. Throws IoError on a bad stream and EmptyDataset when nothing
/// survives validation.
inline std::pair<Dataset, IngestReport> parse_match_log(std::istream& in,
                                                        const IngestOptions& opts = {}) {
  if (!in) throw Error(ErrorCode::kIoError, "match log stream is not readable");
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.emplace_back(line_no, std::move(line));
  }
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failure on match log stream");

  std::vector<detail::ParsedLine> parsed(lines.size());
  parallel_for(lines.size(), opts.threads, [&](std::size_t i) {
    parsed[i] = detail::parse_match_line(lines[i].second, lines[i].first, opts.min_team_size);
  });

  Dataset d;
  IngestReport report;
  std::set<std::string> seen_ids;
  std::set<PlayerId> players;
  for (auto& p : parsed) {
    if (p.match && !seen_ids.insert(p.match->match_id).second) {
      p.violations.push_back(Violation::kDuplicateMatchId);
      p.match.reset();
    }
    if (!p.match) {
      ++report.matches_rejected;
      for (Violation v : p.violations) report.violations.push_back({p.label, v});
      continue;
    }
    ++report.matches_accepted;
    for (const Team& t : p.match->teams) players.insert(t.players.begin(), t.players.end());
    d.matches.push_back(std::move(*p.match));
  }
  report.players_seen = players.size();
  if (d.matches.empty()) {
    throw Error(ErrorCode::kEmptyDataset,
                "no valid match records (" + std::to_string(report.matches_rejected) +
                    " rejected)");
  }
  sort_matches(d);
  return {std::move(d), std::move(report)};
}

inline nlohmann::ordered_json match_to_json(const MatchRecord& m) {
  nlohmann::ordered_json j;
  j["match_id"] = m.match_id;
  j["start_time"] = format_utc(m.start_time);
  j["teams"] = nlohmann::ordered_json::array();
  for (const Team& t : m.teams) {
    nlohmann::ordered_json jt;
    jt["index"] = t.index;
    jt["players"] = nlohmann::ordered_json::array();
    for (const PlayerId& p : t.players) jt["players"].push_back(p.value);
    jt["rank"] = t.rank;
    j["teams"].push_back(std::move(jt));
  }
  j["landings"] = nlohmann::ordered_json::object();
  for (const auto& [p, pos] : m.landings) j["landings"][p.value] = {pos.x, pos.y};
  return j;
}

inline void write_match_log(std::ostream& out, const Dataset& d) {
  for (const MatchRecord& m : d.matches) out << match_to_json(m).dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failure on match log stream");
}

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Splits `a,b` lines. Returns false when the line does not hold exactly two
/// non-empty fields.
inline bool split_pair_line(const std::string& line, std::string& a, std::string& b) {
  const auto comma = line.find(',');
  if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) return false;
  a = trim(line.substr(0, comma));
  b = trim(line.substr(comma + 1));
  return !a.empty() && !b.empty();
}

}  // namespace detail

struct PairListParse {
  std::set<PairKey> pairs;
  std::size_t rejected = 0;
};

/// Two-column `player_a,player_b` CSV; an optional header row is skipped.
/// Self-pairs and malformed rows are counted, not fatal.
inline PairListParse parse_pair_list(std::istream& in) {
  if (!in) throw Error(ErrorCode::kIoError, "pair list stream is not readable");
  PairListParse out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    std::string a, b;
    const bool ok = detail::split_pair_line(line, a, b);
    if (first && ok && a == "player_a" && b == "player_b") {
      first = false;
      continue;
    }
    first = false;
    if (!ok || a == b) {
      ++out.rejected;
      continue;
    }
    out.pairs.insert(canonical_pair(a, b));
  }
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failure on pair list stream");
  return out;
}

inline PairListParse parse_friendships(std::istream& in) { return parse_pair_list(in); }

/// Headerless, one canonical pair per line.
inline void write_pair_list(std::ostream& out, const std::set<PairKey>& pairs) {
  for (const PairKey& k : pairs) out << k.a().value << ',' << k.b().value << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failure on pair list stream");
}

/// Marks players with fewer than `min_matches` appearances as inactive.
/// Matches are kept intact; the droplist only affects pair enumeration.
inline Dataset filter_active_players(Dataset d, std::size_t min_matches) {
  if (min_matches < 1) throw Error(ErrorCode::kDomainError, "min_matches must be >= 1");
  d.inactive.clear();
  for (const auto& [player, count] : appearance_counts(d)) {
    if (count < min_matches) d.inactive.insert(player);
  }
  return d;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  return out;
}

/// Loads `matches.jsonl` and, when present, `friendships.csv` from a directory.
inline std::pair<Dataset, IngestReport> load_dataset_dir(const std::filesystem::path& dir,
                                                         const IngestOptions& opts = {}) {
  const auto log_path = dir / kMatchLogFile;
  if (!std::filesystem::exists(log_path)) {
    throw Error(ErrorCode::kEmptyDataset, "no " + std::string(kMatchLogFile) + " in '" +
                                              dir.string() + "'");
  }
  auto in = open_input(log_path);
  auto result = parse_match_log(in, opts);
  const auto friends_path = dir / kFriendshipFile;
  if (std::filesystem::exists(friends_path)) {
    auto fin = open_input(friends_path);
    result.first.friendships = parse_friendships(fin).pairs;
  }
  return result;
}

}  // namespace collusion
