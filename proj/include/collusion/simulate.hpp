#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "collusion/core_model.hpp"
#include "collusion/ingest.hpp"
#include "collusion/rng.hpp"

namespace collusion {

struct SimConfig {
  std::size_t num_players = 2000;
  std::size_t team_size = 2;
  std::size_t teams_per_match = 20;
  std::size_t num_matches = 1000;
  std::size_t colluder_pairs = 10;
  double colluder_strength = 0.9;
  std::uint64_t seed = 0;
  double map_extent = 80'000.0;
  /// Random friendships among the whole population, unrelated to play.
  std::size_t background_friendships = 0;
  /// Per-axis spread of a player around its team's landing anchor. Two
  /// teammates then average about sqrt(pi) * spread apart (~1,890 units).
  double teammate_spread = 1'064.0;
  UtcTime first_start{1'704'067'200'000};  // 2024-01-01T00:00:00Z
  std::int64_t match_interval_ms = 60'000;
};

struct GroundTruth {
  std::set<PairKey> colluding_pairs;
  bool operator==(const GroundTruth&) const = default;
};

/// Shared opponent matches scheduled for each planted pair.
inline std::size_t planted_joint_matches(double strength) {
  return 3 + static_cast<std::size_t>(std::lround(9.0 * strength));
}

inline void validate(const SimConfig& cfg) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kConfigError, why); };
  if (cfg.team_size < 2) fail("team_size must be >= 2");
  if (cfg.teams_per_match < 2) fail("teams_per_match must be >= 2");
  if (cfg.num_matches < 1) fail("num_matches must be >= 1");
  if (cfg.teams_per_match * cfg.team_size > cfg.num_players) {
    fail("teams_per_match * team_size exceeds num_players");
  }
  if (cfg.colluder_pairs * 2 * cfg.team_size > cfg.teams_per_match * cfg.team_size) {
    fail("too many colluder pairs to place them all on distinct teams of one match");
  }
  if (!(cfg.colluder_strength >= 0.0 && cfg.colluder_strength <= 1.0)) {
    fail("colluder_strength must lie in [0, 1]");
  }
  if (cfg.colluder_pairs > 0 && cfg.num_matches < planted_joint_matches(cfg.colluder_strength) + 1) {
    fail("num_matches too small to schedule planted pairs");
  }
  if (!(cfg.map_extent > 0.0) || !(cfg.teammate_spread >= 0.0)) fail("map geometry");
}

namespace detail {

struct Plant {
  std::size_t pair;
  bool teammates;
};

inline std::string player_name(std::size_t i, std::size_t population) {
  const std::size_t width = std::to_string(population - 1).size();
  std::string digits = std::to_string(i);
  return "p" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace detail

/// Uniform background play plus planted colluding opponent pairs whose
/// signals are each switched on with probability `colluder_strength`.
inline std::pair<Dataset, GroundTruth> generate(const SimConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t n_teams = cfg.teams_per_match;
  const std::size_t per_match = n_teams * cfg.team_size;
  const double s = cfg.colluder_strength;

  std::vector<PlayerId> players;
  players.reserve(cfg.num_players);
  for (std::size_t i = 0; i < cfg.num_players; ++i) {
    players.emplace_back(detail::player_name(i, cfg.num_players));
  }

  Dataset d;
  GroundTruth gt;

  // Planted pairs and their schedules.
  const auto colluders = rng.sample_without_replacement(cfg.num_players, 2 * cfg.colluder_pairs);
  std::vector<std::pair<std::size_t, std::size_t>> planted;
  std::map<std::size_t, std::size_t> partner;
  std::vector<std::vector<detail::Plant>> plan(cfg.num_matches);
  const std::size_t joint = planted_joint_matches(s);
  for (std::size_t k = 0; k < cfg.colluder_pairs; ++k) {
    planted.emplace_back(colluders[2 * k], colluders[2 * k + 1]);
    partner[colluders[2 * k]] = colluders[2 * k + 1];
    partner[colluders[2 * k + 1]] = colluders[2 * k];
    const PairKey key = canonical_pair(players[colluders[2 * k]], players[colluders[2 * k + 1]]);
    gt.colluding_pairs.insert(key);
    if (rng.bernoulli(s)) d.friendships.insert(key);

    std::vector<std::size_t> when;
    if (rng.bernoulli(s)) {
      // A contiguous block of global matches is consecutive for both players.
      const std::size_t start = 1 + rng.below(cfg.num_matches - joint);
      for (std::size_t t = 0; t < joint; ++t) when.push_back(start + t);
    } else {
      for (std::size_t idx : rng.sample_without_replacement(cfg.num_matches - 1, joint)) {
        when.push_back(idx + 1);
      }
      std::sort(when.begin(), when.end());
    }
    for (std::size_t t : when) plan[t].push_back({k, false});
    if (rng.bernoulli(s)) plan[rng.below(when.front())].push_back({k, true});
  }

  for (std::size_t k = 0; k < cfg.background_friendships; ++k) {
    const auto two = rng.sample_without_replacement(cfg.num_players, 2);
    d.friendships.insert(canonical_pair(players[two[0]], players[two[1]]));
  }

  d.matches.reserve(cfg.num_matches);
  for (std::size_t t = 0; t < cfg.num_matches; ++t) {
    std::vector<std::vector<std::size_t>> rosters(n_teams);
    std::vector<std::size_t> team_order(n_teams);
    for (std::size_t i = 0; i < n_teams; ++i) team_order[i] = i;
    rng.shuffle(team_order);

    struct OpponentPlant {
      std::size_t team_a;
      std::size_t team_b;
    };
    std::vector<OpponentPlant> opponents;
    std::set<std::size_t> forced;
    std::size_t next_team = 0;
    for (const detail::Plant& p : plan[t]) {
      const auto [a, b] = planted[p.pair];
      forced.insert(a);
      forced.insert(b);
      if (p.teammates) {
        rosters[team_order[next_team++]] = {a, b};
      } else {
        const std::size_t ta = team_order[next_team++];
        const std::size_t tb = team_order[next_team++];
        rosters[ta].push_back(a);
        rosters[tb].push_back(b);
        opponents.push_back({ta, tb});
      }
    }

    // Planted pairs meet only on their schedule, never by background chance.
    const std::size_t needed = per_match - forced.size();
    std::vector<std::size_t> fill;
    std::set<std::size_t> present = forced;
    const auto order = rng.sample_without_replacement(cfg.num_players, cfg.num_players);
    for (std::size_t idx : order) {
      if (fill.size() == needed) break;
      if (present.contains(idx)) continue;
      const auto mate = partner.find(idx);
      if (mate != partner.end() && present.contains(mate->second)) continue;
      fill.push_back(idx);
      present.insert(idx);
    }
    // Tiny populations may need a planted partner to complete the roster.
    for (std::size_t idx : order) {
      if (fill.size() == needed) break;
      if (present.insert(idx).second) fill.push_back(idx);
    }
    std::size_t next_fill = 0;
    for (auto& roster : rosters) {
      while (roster.size() < cfg.team_size) roster.push_back(fill[next_fill++]);
    }

    std::vector<int> ranks(n_teams);
    for (std::size_t i = 0; i < n_teams; ++i) ranks[i] = static_cast<int>(i + 1);
    rng.shuffle(ranks);
    auto give_rank = [&ranks](std::size_t team, int rank) {
      const auto holder = std::find(ranks.begin(), ranks.end(), rank);
      std::swap(*holder, ranks[team]);
    };

    std::vector<Position> anchors(n_teams);
    for (auto& a : anchors) a = {rng.uniform(0.0, cfg.map_extent), rng.uniform(0.0, cfg.map_extent)};

    for (const OpponentPlant& op : opponents) {
      const int half = static_cast<int>(n_teams / 2);
      if (half >= 2 && rng.bernoulli(s)) {
        const int r1 = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(half)));
        std::vector<int> partners;
        for (int delta : {-2, -1, 1, 2}) {
          if (r1 + delta >= 1 && r1 + delta <= half) partners.push_back(r1 + delta);
        }
        const int r2 = partners[rng.below(partners.size())];
        give_rank(op.team_a, r1);
        give_rank(op.team_b, r2);
      }
      if (rng.bernoulli(s)) {
        anchors[op.team_b] = {anchors[op.team_a].x + rng.normal(0.0, cfg.teammate_spread),
                              anchors[op.team_a].y + rng.normal(0.0, cfg.teammate_spread)};
      }
    }

    MatchRecord m;
    m.match_id = "m" + detail::player_name(t, cfg.num_matches).substr(1);
    m.start_time = UtcTime{cfg.first_start.ms + static_cast<std::int64_t>(t) * cfg.match_interval_ms};
    for (std::size_t ti = 0; ti < n_teams; ++ti) {
      Team team;
      team.index = static_cast<int>(ti);
      team.rank = ranks[ti];
      for (std::size_t pi : rosters[ti]) {
        team.players.push_back(players[pi]);
        m.landings.emplace(players[pi],
                           Position{anchors[ti].x + rng.normal(0.0, cfg.teammate_spread),
                                    anchors[ti].y + rng.normal(0.0, cfg.teammate_spread)});
      }
      m.teams.push_back(std::move(team));
    }
    d.matches.push_back(std::move(m));
  }
  sort_matches(d);
  return {std::move(d), std::move(gt)};
}

/// Writes the match log, friendship list and ground truth in ingest formats.
inline void write_dataset(const Dataset& d, const GroundTruth& gt,
                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir.string() + "': " + ec.message());
  {
    auto out = open_output(dir / kMatchLogFile);
    write_match_log(out, d);
  }
  {
    auto out = open_output(dir / kFriendshipFile);
    write_pair_list(out, d.friendships);
  }
  {
    auto out = open_output(dir / kGroundTruthFile);
    write_pair_list(out, gt.colluding_pairs);
  }
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
  auto in = open_input(path);
  return GroundTruth{parse_pair_list(in).pairs};
}

}  // namespace collusion
