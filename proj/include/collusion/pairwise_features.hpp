#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "collusion/core_model.hpp"
#include "collusion/parallel.hpp"

namespace collusion {

enum class PairContext { kTeammate, kOpponent };

constexpr std::string_view to_string(PairContext c) {
  return c == PairContext::kTeammate ? "teammate" : "opponent";
}

/// One shared match of a pair. Ordinals are 0-based positions of the match in
/// each player's own time-ordered match sequence.
struct PairObservation {
  PairKey pair;
  PairContext context = PairContext::kOpponent;
  std::string match_id;
  double distance = 0.0;
  std::optional<int> rank_diff;  // opponent context only
  int rank_a = 0;
  int rank_b = 0;
  std::size_t match_ordinal_a = 0;
  std::size_t match_ordinal_b = 0;
};

struct PairFeatures {
  PairKey pair;
  std::size_t num_matches_opp = 0;
  std::size_t num_matches_team = 0;
  std::size_t max_consecutive_opp = 0;
  std::size_t max_consecutive_team = 0;
  double avg_distance_opp = 0.0;
  double avg_rank_diff_opp = 0.0;
  bool acquaintance = false;
  std::optional<double> avg_distance_team;
  /// Shared opponent-context matches, in dataset order.
  std::vector<std::string> match_ids;
  std::vector<std::string> team_match_ids;

  bool operator==(const PairFeatures&) const = default;
};

/// Known-pair rule: friendship, or enough co-occurrence in both contexts.
struct AcquaintanceRule {
  std::size_t min_total = 3;
  std::size_t per_context = 1;

  bool holds(bool friends, std::size_t n_team, std::size_t n_opp) const {
    return friends || (n_team >= per_context && n_opp >= per_context &&
                       n_team + n_opp >= min_total);
  }
};

struct ExtractOptions {
  AcquaintanceRule acquaintance;
  std::size_t threads = 1;
};

inline constexpr std::size_t kDetectorFeatureCount = 5;
inline constexpr std::array<std::string_view, kDetectorFeatureCount> kDetectorFeatureNames = {
    "n_matches", "max_consec", "proximity", "rank_diff", "acquaintance"};

/// Fixed detector order: [num_matches_opp, max_consecutive_opp,
/// avg_distance_opp, avg_rank_diff_opp, acquaintance].
inline std::array<double, kDetectorFeatureCount> detector_vector(const PairFeatures& f) {
  return {static_cast<double>(f.num_matches_opp), static_cast<double>(f.max_consecutive_opp),
          f.avg_distance_opp, f.avg_rank_diff_opp, f.acquaintance ? 1.0 : 0.0};
}

/// Longest run of observations that are consecutive in both players' own
/// sequences. Observations must be in time order.
inline std::size_t consecutive_streak(std::span<const PairObservation> obs) {
  std::size_t best = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (i > 0 && obs[i].match_ordinal_a == obs[i - 1].match_ordinal_a + 1 &&
        obs[i].match_ordinal_b == obs[i - 1].match_ordinal_b + 1) {
      ++run;
    } else {
      run = 1;
    }
    best = std::max(best, run);
  }
  return best;
}

namespace detail {

struct RawObservation {
  std::uint64_t key;  // (lo player index << 32) | hi player index
  std::uint32_t match_index;
  std::uint32_t ordinal_lo;
  std::uint32_t ordinal_hi;
  bool teammate;
  std::int32_t rank_diff;
  double distance;
};

struct PlayerIndex {
  std::vector<PlayerId> ids;  // sorted, so index order == id order
  std::unordered_map<PlayerId, std::uint32_t, PlayerIdHash> lookup;
};

inline PlayerIndex index_players(const Dataset& d) {
  std::set<PlayerId> all;
  for (const MatchRecord& m : d.matches)
    for (const Team& t : m.teams) all.insert(t.players.begin(), t.players.end());
  PlayerIndex idx;
  idx.ids.assign(all.begin(), all.end());
  idx.lookup.reserve(idx.ids.size());
  for (std::uint32_t i = 0; i < idx.ids.size(); ++i) idx.lookup.emplace(idx.ids[i], i);
  return idx;
}

/// Per match, the 0-based ordinal of that match for each rostered player.
inline std::vector<std::vector<std::uint32_t>> match_ordinals(const Dataset& d,
                                                              const PlayerIndex& idx) {
  std::vector<std::uint32_t> counter(idx.ids.size(), 0);
  std::vector<std::vector<std::uint32_t>> out(d.matches.size());
  for (std::size_t mi = 0; mi < d.matches.size(); ++mi) {
    for (const Team& t : d.matches[mi].teams) {
      for (const PlayerId& p : t.players) out[mi].push_back(counter[idx.lookup.at(p)]++);
    }
  }
  return out;
}

}  // namespace detail

/// Features for every pair of active players that shared at least one match
/// in either context, sorted by PairKey.
inline std::vector<PairFeatures> compute_pair_table(const Dataset& d,
                                                    const ExtractOptions& opts = {}) {
  const detail::PlayerIndex idx = detail::index_players(d);
  const auto ordinals = detail::match_ordinals(d, idx);
  std::vector<bool> active(idx.ids.size());
  for (std::size_t i = 0; i < idx.ids.size(); ++i) active[i] = d.is_active(idx.ids[i]);

  // Map: per-match pair observations. Reduce: sort by (pair, match) and fold.
  std::vector<std::vector<detail::RawObservation>> per_match(d.matches.size());
  parallel_for(d.matches.size(), opts.threads, [&](std::size_t mi) {
    struct Slot {
      std::uint32_t player;
      std::uint32_t ordinal;
      int team;
      int rank;
      Position pos;
    };
    const MatchRecord& m = d.matches[mi];
    std::vector<Slot> slots;
    std::size_t k = 0;
    for (std::size_t ti = 0; ti < m.teams.size(); ++ti) {
      for (const PlayerId& p : m.teams[ti].players) {
        const std::uint32_t pi = idx.lookup.at(p);
        const std::uint32_t ord = ordinals[mi][k++];
        if (!active[pi]) continue;
        slots.push_back({pi, ord, static_cast<int>(ti), m.teams[ti].rank, m.landings.at(p)});
      }
    }
    auto& out = per_match[mi];
    out.reserve(slots.size() * (slots.size() - (slots.empty() ? 0 : 1)) / 2);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      for (std::size_t j = i + 1; j < slots.size(); ++j) {
        const Slot* lo = &slots[i];
        const Slot* hi = &slots[j];
        if (hi->player < lo->player) std::swap(lo, hi);
        const bool same_team = lo->team == hi->team;
        out.push_back({(static_cast<std::uint64_t>(lo->player) << 32) | hi->player,
                       static_cast<std::uint32_t>(mi), lo->ordinal, hi->ordinal, same_team,
                       same_team ? 0 : std::abs(lo->rank - hi->rank), distance(lo->pos, hi->pos)});
      }
    }
  });

  std::vector<detail::RawObservation> all;
  {
    std::size_t total = 0;
    for (const auto& v : per_match) total += v.size();
    all.reserve(total);
    for (auto& v : per_match) {
      all.insert(all.end(), v.begin(), v.end());
      v.clear();
      v.shrink_to_fit();
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) {
    return l.key != r.key ? l.key < r.key : l.match_index < r.match_index;
  });

  std::vector<PairFeatures> table;
  for (std::size_t begin = 0; begin < all.size();) {
    std::size_t end = begin;
    while (end < all.size() && all[end].key == all[begin].key) ++end;

    PairFeatures f;
    const std::uint32_t lo = static_cast<std::uint32_t>(all[begin].key >> 32);
    const std::uint32_t hi = static_cast<std::uint32_t>(all[begin].key & 0xffffffffu);
    f.pair = canonical_pair(idx.ids[lo], idx.ids[hi]);

    double dist_opp = 0.0, dist_team = 0.0, rank_sum = 0.0;
    std::size_t run_opp = 0, run_team = 0;
    const detail::RawObservation* prev_opp = nullptr;
    const detail::RawObservation* prev_team = nullptr;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& o = all[i];
      auto extend = [&o](const detail::RawObservation* prev, std::size_t& run) {
        const bool chained = prev && o.ordinal_lo == prev->ordinal_lo + 1 &&
                             o.ordinal_hi == prev->ordinal_hi + 1;
        run = chained ? run + 1 : 1;
        return run;
      };
      if (o.teammate) {
        ++f.num_matches_team;
        dist_team += o.distance;
        f.max_consecutive_team = std::max(f.max_consecutive_team, extend(prev_team, run_team));
        prev_team = &o;
      } else {
        ++f.num_matches_opp;
        dist_opp += o.distance;
        rank_sum += o.rank_diff;
        f.max_consecutive_opp = std::max(f.max_consecutive_opp, extend(prev_opp, run_opp));
        prev_opp = &o;
      }
    }
    if (f.num_matches_opp > 0) {
      f.avg_distance_opp = dist_opp / static_cast<double>(f.num_matches_opp);
      f.avg_rank_diff_opp = rank_sum / static_cast<double>(f.num_matches_opp);
    }
    if (f.num_matches_team > 0) {
      f.avg_distance_team = dist_team / static_cast<double>(f.num_matches_team);
    }
    f.acquaintance = opts.acquaintance.holds(d.friendships.contains(f.pair), f.num_matches_team,
                                             f.num_matches_opp);
    for (std::size_t i = begin; i < end; ++i) {
      const std::string& id = d.matches[all[i].match_index].match_id;
      (all[i].teammate ? f.team_match_ids : f.match_ids).push_back(id);
    }
    table.push_back(std::move(f));
    begin = end;
  }
  return table;
}

/// Pairs with at least `min_shared` shared matches in `context`, sorted by
/// PairKey. Pairs involving an inactive player are never emitted.
inline std::vector<PairFeatures> extract_pairs(const Dataset& d, std::size_t min_shared,
                                               PairContext context,
                                               const ExtractOptions& opts = {}) {
  if (min_shared < 1) throw Error(ErrorCode::kDomainError, "min_shared must be >= 1");
  std::vector<PairFeatures> out;
  for (PairFeatures& f : compute_pair_table(d, opts)) {
    const std::size_t n =
        context == PairContext::kOpponent ? f.num_matches_opp : f.num_matches_team;
    if (n < min_shared) continue;
    out.push_back(std::move(f));
  }
  return out;
}

/// Every shared match of one pair in dataset order, both contexts.
inline std::vector<PairObservation> pair_timeline(const Dataset& d, const PairKey& pair) {
  std::vector<PairObservation> out;
  std::size_t ord_a = 0, ord_b = 0;
  for (const MatchRecord& m : d.matches) {
    const Team* team_a = nullptr;
    const Team* team_b = nullptr;
    for (const Team& t : m.teams) {
      for (const PlayerId& p : t.players) {
        if (p == pair.a()) team_a = &t;
        if (p == pair.b()) team_b = &t;
      }
    }
    if (team_a && team_b) {
      PairObservation o;
      o.pair = pair;
      o.context = team_a == team_b ? PairContext::kTeammate : PairContext::kOpponent;
      o.match_id = m.match_id;
      o.distance = distance(m.landings.at(pair.a()), m.landings.at(pair.b()));
      o.rank_a = team_a->rank;
      o.rank_b = team_b->rank;
      if (o.context == PairContext::kOpponent) o.rank_diff = std::abs(o.rank_a - o.rank_b);
      o.match_ordinal_a = ord_a;
      o.match_ordinal_b = ord_b;
      out.push_back(std::move(o));
    }
    ord_a += team_a ? 1 : 0;
    ord_b += team_b ? 1 : 0;
  }
  return out;
}

inline bool acquaintance(const Dataset& d, const PairKey& pair,
                         const AcquaintanceRule& rule = {}) {
  std::size_t n_team = 0, n_opp = 0;
  for (const PairObservation& o : pair_timeline(d, pair)) {
    (o.context == PairContext::kTeammate ? n_team : n_opp) += 1;
  }
  return rule.holds(d.friendships.contains(pair), n_team, n_opp);
}

/// Exact probability as a reduced fraction.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Ratio&) const = default;
};

inline Ratio make_ratio(std::uint64_t num, std::uint64_t den) {
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Ratio{0, 1} : Ratio{num / g, den / g};
}

/// Probability that two given teams finish exactly one rank apart under a
/// uniformly random ranking of `teams` teams: 2(T-1)(T-2)!/T! = 2/T.
inline Ratio p_rank_adjacent(std::uint64_t teams) {
  if (teams < 2) throw Error(ErrorCode::kDomainError, "team count must be >= 2");
  return make_ratio(2 * (teams - 1), teams * (teams - 1));
}

/// Same event restricted to both teams landing in the top `top` slots:
/// 2(K-1)(T-2)!/T!.
inline Ratio p_rank_adjacent_top(std::uint64_t teams, std::uint64_t top) {
  if (teams < 2 || top < 2 || top > teams) {
    throw Error(ErrorCode::kDomainError, "need 2 <= top <= teams");
  }
  return make_ratio(2 * (top - 1), teams * (teams - 1));
}

inline double binomial_coefficient(unsigned n, unsigned k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (unsigned i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / i;
  return std::round(c);
}

/// C(n,k) p^k (1-p)^(n-k).
inline double binomial_event_prob(unsigned n, unsigned k, double p) {
  if (k > n || !(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kDomainError, "need 0 <= k <= n and 0 <= p <= 1");
  }
  return binomial_coefficient(n, k) * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

}  // namespace collusion
