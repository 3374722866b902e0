#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "collusion/error.hpp"

namespace collusion {

/// Opaque, case-sensitive player identifier.
struct PlayerId {
  std::string value;

  PlayerId() = default;
  explicit PlayerId(std::string v) : value(std::move(v)) {}

  bool empty() const noexcept { return value.empty(); }
  auto operator<=>(const PlayerId&) const = default;
  bool operator==(const PlayerId&) const = default;
};

struct PlayerIdHash {
  std::size_t operator()(const PlayerId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};

struct TeamRef {
  std::string match_id;
  int team_index = 0;

  auto operator<=>(const TeamRef&) const = default;
};

/// Planar landing position in game units.
struct Position {
  double x = 0.0;
  double y = 0.0;

  bool finite() const noexcept { return std::isfinite(x) && std::isfinite(y); }
  bool operator==(const Position&) const = default;
};

inline double distance(const Position& a, const Position& b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Milliseconds since the Unix epoch, UTC.
struct UtcTime {
  std::int64_t ms = 0;

  auto operator<=>(const UtcTime&) const = default;
};

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff]Z`. Returns nullopt on any deviation.
inline std::optional<UtcTime> parse_utc(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int consumed = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi,
                  &s, &consumed) != 6 ||
      consumed != 19) {
    return std::nullopt;
  }
  std::string_view rest = text.substr(19);
  int millis = 0;
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    int digits = 0;
    while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') {
      if (digits < 3) millis = millis * 10 + (rest.front() - '0');
      ++digits;
      rest.remove_prefix(1);
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 3; ++i) millis *= 10;
  }
  if (rest != "Z") return std::nullopt;
  if (h > 23 || mi > 59 || s > 60) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  const std::int64_t secs =
      static_cast<std::int64_t>(days_since) * 86400 + h * 3600 + mi * 60 + s;
  return UtcTime{secs * 1000 + millis};
}

/// Formats with millisecond precision, e.g. `2024-03-01T12:00:00.000Z`.
inline std::string format_utc(UtcTime t) {
  using namespace std::chrono;
  std::int64_t ms = t.ms;
  std::int64_t days = ms >= 0 ? ms / 86'400'000 : -((-ms + 86'399'999) / 86'400'000);
  std::int64_t rem = ms - days * 86'400'000;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  const int h = static_cast<int>(rem / 3'600'000);
  rem %= 3'600'000;
  const int mi = static_cast<int>(rem / 60'000);
  rem %= 60'000;
  const int s = static_cast<int>(rem / 1000);
  const int milli = static_cast<int>(rem % 1000);
  char out[40];
  std::snprintf(out, sizeof(out), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), h, mi, s, milli);
  return out;
}

struct Team {
  int index = 0;
  std::vector<PlayerId> players;
  int rank = 0;

  bool operator==(const Team&) const = default;
};

struct MatchRecord {
  std::string match_id;
  UtcTime start_time;
  std::vector<Team> teams;
  std::map<PlayerId, Position> landings;

  bool operator==(const MatchRecord&) const = default;
};

/// Unordered pair of distinct players, stored in canonical (sorted) order.
class PairKey {
 public:
  PairKey() = default;

  const PlayerId& a() const noexcept { return a_; }
  const PlayerId& b() const noexcept { return b_; }

  auto operator<=>(const PairKey&) const = default;
  bool operator==(const PairKey&) const = default;

  friend PairKey canonical_pair(PlayerId a, PlayerId b);

 private:
  PairKey(PlayerId a, PlayerId b) : a_(std::move(a)), b_(std::move(b)) {}

  PlayerId a_;
  PlayerId b_;
};

/// Throws InvalidPair when both ids are equal.
inline PairKey canonical_pair(PlayerId a, PlayerId b) {
  if (a == b) {
    throw Error(ErrorCode::kInvalidPair, "self-pair '" + a.value + "'");
  }
  if (b < a) std::swap(a, b);
  return PairKey(std::move(a), std::move(b));
}

inline PairKey canonical_pair(std::string_view a, std::string_view b) {
  return canonical_pair(PlayerId(std::string(a)), PlayerId(std::string(b)));
}

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const noexcept {
    const std::size_t h1 = PlayerIdHash{}(k.a());
    const std::size_t h2 = PlayerIdHash{}(k.b());
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
  }
};

struct Dataset {
  std::vector<MatchRecord> matches;
  std::set<PairKey> friendships;
  /// Players excluded from pair enumeration (see filter_active_players).
  std::set<PlayerId> inactive;

  bool operator==(const Dataset&) const = default;

  bool is_active(const PlayerId& p) const { return !inactive.contains(p); }
};

/// Restores the canonical order: start_time ascending, match_id breaking ties.
inline void sort_matches(Dataset& d) {
  std::stable_sort(d.matches.begin(), d.matches.end(),
                   [](const MatchRecord& l, const MatchRecord& r) {
                     if (l.start_time != r.start_time) return l.start_time < r.start_time;
                     return l.match_id < r.match_id;
                   });
}

enum class Violation {
  kEmptyMatchId,
  kNoTeams,
  kDuplicateTeamIndex,
  kNegativeTeamIndex,
  kDuplicateRank,
  kRankOutOfRange,
  kTeamTooSmall,
  kDuplicateRoster,
  kEmptyPlayerId,
  kMissingLanding,
  kUnrosteredLanding,
  kNonFinitePosition,
  kMalformedRecord,
  kDuplicateMatchId,
};

constexpr std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::kEmptyMatchId: return "EmptyMatchId";
    case Violation::kNoTeams: return "NoTeams";
    case Violation::kDuplicateTeamIndex: return "DuplicateTeamIndex";
    case Violation::kNegativeTeamIndex: return "NegativeTeamIndex";
    case Violation::kDuplicateRank: return "DuplicateRank";
    case Violation::kRankOutOfRange: return "RankOutOfRange";
    case Violation::kTeamTooSmall: return "TeamTooSmall";
    case Violation::kDuplicateRoster: return "DuplicateRoster";
    case Violation::kEmptyPlayerId: return "EmptyPlayerId";
    case Violation::kMissingLanding: return "MissingLanding";
    case Violation::kUnrosteredLanding: return "UnrosteredLanding";
    case Violation::kNonFinitePosition: return "NonFinitePosition";
    case Violation::kMalformedRecord: return "MalformedRecord";
    case Violation::kDuplicateMatchId: return "DuplicateMatchId";
  }
  return "Unknown";
}

/// One entry per broken invariant kind; empty means the match is well formed.
inline std::vector<Violation> validate_match(const MatchRecord& m,
                                             std::size_t min_team_size = 2) {
  std::vector<Violation> out;
  auto flag = [&out](Violation v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };

  if (m.match_id.empty()) flag(Violation::kEmptyMatchId);
  if (m.teams.empty()) flag(Violation::kNoTeams);

  const int team_count = static_cast<int>(m.teams.size());
  std::set<int> indices;
  std::set<int> ranks;
  std::set<PlayerId> rostered;
  for (const Team& t : m.teams) {
    if (t.index < 0) flag(Violation::kNegativeTeamIndex);
    if (!indices.insert(t.index).second) flag(Violation::kDuplicateTeamIndex);
    if (t.rank < 1 || t.rank > team_count) {
      flag(Violation::kRankOutOfRange);
    } else if (!ranks.insert(t.rank).second) {
      flag(Violation::kDuplicateRank);
    }
    if (t.players.size() < min_team_size) flag(Violation::kTeamTooSmall);
    for (const PlayerId& p : t.players) {
      if (p.empty()) flag(Violation::kEmptyPlayerId);
      if (!rostered.insert(p).second) flag(Violation::kDuplicateRoster);
      auto it = m.landings.find(p);
      if (it == m.landings.end()) {
        flag(Violation::kMissingLanding);
      } else if (!it->second.finite()) {
        flag(Violation::kNonFinitePosition);
      }
    }
  }
  for (const auto& [player, pos] : m.landings) {
    if (!rostered.contains(player)) flag(Violation::kUnrosteredLanding);
    if (!pos.finite()) flag(Violation::kNonFinitePosition);
  }
  return out;
}

/// Per-player appearance counts across all matches.
inline std::map<PlayerId, std::size_t> appearance_counts(const Dataset& d) {
  std::map<PlayerId, std::size_t> counts;
  for (const MatchRecord& m : d.matches) {
    for (const Team& t : m.teams) {
      for (const PlayerId& p : t.players) ++counts[p];
    }
  }
  return counts;
}

}  // namespace collusion
