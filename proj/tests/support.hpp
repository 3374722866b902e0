#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "collusion/collusion.hpp"

namespace collusion::testing {

struct TeamSpec {
  int rank;
  std::vector<std::string> players;
};

/// Builds a match whose teams are indexed in listing order. Players not
/// named in `where` land at the origin.
inline MatchRecord make_match(std::string id, std::int64_t minute, std::vector<TeamSpec> teams,
                              const std::map<std::string, Position>& where = {}) {
  MatchRecord m;
  m.match_id = std::move(id);
  m.start_time = UtcTime{1'700'000'000'000 + minute * 60'000};
  int index = 0;
  for (TeamSpec& spec : teams) {
    Team t;
    t.index = index++;
    t.rank = spec.rank;
    for (const std::string& p : spec.players) {
      t.players.emplace_back(p);
      const auto it = where.find(p);
      m.landings.emplace(PlayerId(p), it == where.end() ? Position{} : it->second);
    }
    m.teams.push_back(std::move(t));
  }
  return m;
}

/// Random small world: variable team counts and sizes, random ranks and
/// coordinates, some friendships and an occasional inactive player.
inline Dataset random_fixture(std::uint64_t seed, std::size_t max_players = 50,
                              std::size_t max_matches = 30) {
  std::mt19937_64 gen(seed);
  auto pick = [&gen](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  };
  const std::size_t n_players = pick(6, max_players);
  const std::size_t n_matches = pick(1, max_matches);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_players; ++i) ids.push_back("u" + std::to_string(i));

  Dataset d;
  std::uniform_real_distribution<double> coord(0.0, 1000.0);
  for (std::size_t mi = 0; mi < n_matches; ++mi) {
    std::vector<std::string> pool = ids;
    std::shuffle(pool.begin(), pool.end(), gen);
    const std::size_t team_size = pick(2, 3);
    const std::size_t n_teams = pick(2, std::max<std::size_t>(2, n_players / team_size));
    std::vector<int> ranks(n_teams);
    for (std::size_t t = 0; t < n_teams; ++t) ranks[t] = static_cast<int>(t + 1);
    std::shuffle(ranks.begin(), ranks.end(), gen);
    std::vector<TeamSpec> teams;
    std::map<std::string, Position> where;
    std::size_t next = 0;
    for (std::size_t t = 0; t < n_teams; ++t) {
      TeamSpec spec{ranks[t], {}};
      for (std::size_t k = 0; k < team_size; ++k) {
        // Quantized coordinates make exact distance ties likely.
        where[pool[next]] = {std::round(coord(gen)), std::round(coord(gen))};
        spec.players.push_back(pool[next++]);
      }
      teams.push_back(std::move(spec));
    }
    // Shared timestamps exercise the match_id tie-break.
    d.matches.push_back(make_match("g" + std::to_string(mi), static_cast<std::int64_t>(mi / 2),
                                   std::move(teams), where));
  }
  for (std::size_t k = pick(0, 5); k > 0; --k) {
    const std::size_t a = pick(0, n_players - 1), b = pick(0, n_players - 1);
    if (a != b) d.friendships.insert(canonical_pair(ids[a], ids[b]));
  }
  if (pick(0, 1) == 1) d.inactive.insert(PlayerId(ids[pick(0, n_players - 1)]));
  sort_matches(d);
  return d;
}

/// Quadratic-in-players reference: every candidate pair is scanned against
/// every match independently of the production map-reduce path.
inline std::vector<PairFeatures> reference_pairs(const Dataset& d, std::size_t min_shared,
                                                 PairContext context,
                                                 const AcquaintanceRule& rule = {}) {
  std::set<std::string> everyone;
  for (const MatchRecord& m : d.matches) {
    for (const Team& t : m.teams) {
      for (const PlayerId& p : t.players) everyone.insert(p.value);
    }
  }
  const std::vector<std::string> ids(everyone.begin(), everyone.end());

  auto team_of = [](const MatchRecord& m, const std::string& p) -> const Team* {
    for (const Team& t : m.teams) {
      for (const PlayerId& q : t.players) {
        if (q.value == p) return &t;
      }
    }
    return nullptr;
  };

  std::vector<PairFeatures> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const std::string& a = ids[i];
      const std::string& b = ids[j];
      if (d.inactive.contains(PlayerId(a)) || d.inactive.contains(PlayerId(b))) continue;
      PairFeatures f;
      f.pair = canonical_pair(a, b);
      std::size_t ord_a = 0, ord_b = 0;
      std::optional<std::pair<std::size_t, std::size_t>> last_opp, last_team;
      std::size_t run_opp = 0, run_team = 0;
      double dist_opp = 0, dist_team = 0, rank_sum = 0;
      for (const MatchRecord& m : d.matches) {
        const Team* ta = team_of(m, a);
        const Team* tb = team_of(m, b);
        if (ta && tb) {
          const double dx = m.landings.at(PlayerId(a)).x - m.landings.at(PlayerId(b)).x;
          const double dy = m.landings.at(PlayerId(a)).y - m.landings.at(PlayerId(b)).y;
          const double dist = std::sqrt(dx * dx + dy * dy);
          const bool team = ta == tb;
          auto& last = team ? last_team : last_opp;
          auto& run = team ? run_team : run_opp;
          run = (last && last->first + 1 == ord_a && last->second + 1 == ord_b) ? run + 1 : 1;
          last = std::make_pair(ord_a, ord_b);
          if (team) {
            ++f.num_matches_team;
            dist_team += dist;
            f.max_consecutive_team = std::max(f.max_consecutive_team, run);
            f.team_match_ids.push_back(m.match_id);
          } else {
            ++f.num_matches_opp;
            dist_opp += dist;
            rank_sum += std::abs(ta->rank - tb->rank);
            f.max_consecutive_opp = std::max(f.max_consecutive_opp, run);
            f.match_ids.push_back(m.match_id);
          }
        }
        if (ta) ++ord_a;
        if (tb) ++ord_b;
      }
      const std::size_t n = context == PairContext::kOpponent ? f.num_matches_opp
                                                              : f.num_matches_team;
      if (n < min_shared) continue;
      if (f.num_matches_opp > 0) {
        f.avg_distance_opp = dist_opp / static_cast<double>(f.num_matches_opp);
        f.avg_rank_diff_opp = rank_sum / static_cast<double>(f.num_matches_opp);
      }
      if (f.num_matches_team > 0) {
        f.avg_distance_team = dist_team / static_cast<double>(f.num_matches_team);
      }
      const bool friends = d.friendships.contains(f.pair);
      const std::size_t both = f.num_matches_team + f.num_matches_opp;
      f.acquaintance = friends || (f.num_matches_team >= rule.per_context &&
                                   f.num_matches_opp >= rule.per_context &&
                                   both >= rule.min_total);
      out.push_back(std::move(f));
    }
  }
  return out;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("collusion-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace collusion::testing
