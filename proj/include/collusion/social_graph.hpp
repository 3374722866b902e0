#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "collusion/core_model.hpp"
#include "collusion/pairwise_features.hpp"

namespace collusion {

struct SocialEdge {
  PairKey pair;
  PairContext kind = PairContext::kOpponent;
  std::size_t matches = 0;
  std::size_t max_streak = 0;
  std::optional<double> avg_rank_diff;   // opponent edges only
  std::optional<double> rank_closeness;  // opponent edges only, in [0, 1]

  bool operator==(const SocialEdge&) const = default;
};

struct SocialNode {
  std::size_t matches_played = 0;
  bool operator==(const SocialNode&) const = default;
};

/// Edges are kept sorted by (pair, kind); at most one per combination.
struct SocialGraph {
  std::map<PlayerId, SocialNode> nodes;
  std::vector<SocialEdge> edges;

  bool operator==(const SocialGraph&) const = default;
};

struct GraphOptions {
  std::size_t min_matches = 3;
  std::size_t reference_teams = 20;
};

inline double rank_closeness(double avg_rank_diff, std::size_t reference_teams) {
  const double span = static_cast<double>(reference_teams) - 1.0;
  if (span <= 0.0) return 1.0;
  return std::max(0.0, 1.0 - avg_rank_diff / span);
}

namespace detail {
inline void sort_edges(std::vector<SocialEdge>& edges) {
  std::sort(edges.begin(), edges.end(), [](const SocialEdge& l, const SocialEdge& r) {
    if (l.pair != r.pair) return l.pair < r.pair;
    return l.kind < r.kind;
  });
}
}  // namespace detail

/// One edge per context in which a pair shared at least `min_matches`
/// matches. Every player of every feature row becomes a node sized by its
/// dataset appearance count.
inline SocialGraph build_graph(std::span<const PairFeatures> features,
                               const std::map<PlayerId, std::size_t>& appearances,
                               const GraphOptions& opts = {}) {
  SocialGraph g;
  auto add_node = [&](const PlayerId& p) {
    auto it = appearances.find(p);
    g.nodes[p].matches_played = it == appearances.end() ? 0 : it->second;
  };
  for (const PairFeatures& f : features) {
    add_node(f.pair.a());
    add_node(f.pair.b());
    if (f.num_matches_team >= opts.min_matches) {
      g.edges.push_back({f.pair, PairContext::kTeammate, f.num_matches_team,
                         f.max_consecutive_team, std::nullopt, std::nullopt});
    }
    if (f.num_matches_opp >= opts.min_matches) {
      g.edges.push_back({f.pair, PairContext::kOpponent, f.num_matches_opp, f.max_consecutive_opp,
                         f.avg_rank_diff_opp,
                         rank_closeness(f.avg_rank_diff_opp, opts.reference_teams)});
    }
  }
  detail::sort_edges(g.edges);
  return g;
}

namespace detail {

/// Adjacency lists over node positions in g.nodes iteration order.
struct Adjacency {
  std::vector<PlayerId> ids;
  std::map<PlayerId, std::size_t> index;
  std::vector<std::vector<std::size_t>> next;
};

inline Adjacency adjacency(const SocialGraph& g) {
  Adjacency adj;
  for (const auto& [id, node] : g.nodes) {
    adj.index.emplace(id, adj.ids.size());
    adj.ids.push_back(id);
  }
  adj.next.resize(adj.ids.size());
  for (const SocialEdge& e : g.edges) {
    const std::size_t a = adj.index.at(e.pair.a());
    const std::size_t b = adj.index.at(e.pair.b());
    adj.next[a].push_back(b);
    adj.next[b].push_back(a);
  }
  return adj;
}

}  // namespace detail

/// Connected components over both edge kinds, largest first; equal sizes are
/// ordered by their smallest member id.
inline std::vector<std::set<PlayerId>> clusters(const SocialGraph& g) {
  const detail::Adjacency adj = detail::adjacency(g);
  std::vector<std::size_t> parent(adj.ids.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < adj.next.size(); ++a) {
    for (std::size_t b : adj.next[a]) {
      const std::size_t ra = find(a), rb = find(b);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }
  std::map<std::size_t, std::set<PlayerId>> by_root;
  for (std::size_t i = 0; i < adj.ids.size(); ++i) by_root[find(i)].insert(adj.ids[i]);

  std::vector<std::set<PlayerId>> out;
  out.reserve(by_root.size());
  for (auto& [root, members] : by_root) out.push_back(std::move(members));
  std::stable_sort(out.begin(), out.end(), [](const auto& l, const auto& r) {
    if (l.size() != r.size()) return l.size() > r.size();
    return *l.begin() < *r.begin();
  });
  return out;
}

inline constexpr std::size_t kUnboundedRadius = std::numeric_limits<std::size_t>::max();

/// Subgraph induced by every node within `radius` hops of either player.
inline SocialGraph ego_network(const SocialGraph& g, const PairKey& pair,
                               std::size_t radius = 1) {
  for (const PlayerId* p : {&pair.a(), &pair.b()}) {
    if (!g.nodes.contains(*p)) throw Error(ErrorCode::kUnknownPlayer, "'" + p->value + "'");
  }
  const detail::Adjacency adj = detail::adjacency(g);
  std::vector<std::size_t> hops(adj.ids.size(), kUnboundedRadius);
  std::queue<std::size_t> frontier;
  for (const PlayerId* p : {&pair.a(), &pair.b()}) {
    const std::size_t i = adj.index.at(*p);
    hops[i] = 0;
    frontier.push(i);
  }
  while (!frontier.empty()) {
    const std::size_t cur = frontier.front();
    frontier.pop();
    if (hops[cur] >= radius) continue;
    for (std::size_t nb : adj.next[cur]) {
      if (hops[nb] == kUnboundedRadius) {
        hops[nb] = hops[cur] + 1;
        frontier.push(nb);
      }
    }
  }
  SocialGraph out;
  for (std::size_t i = 0; i < adj.ids.size(); ++i) {
    if (hops[i] != kUnboundedRadius) out.nodes.emplace(adj.ids[i], g.nodes.at(adj.ids[i]));
  }
  for (const SocialEdge& e : g.edges) {
    if (out.nodes.contains(e.pair.a()) && out.nodes.contains(e.pair.b())) out.edges.push_back(e);
  }
  return out;
}

inline nlohmann::ordered_json graph_to_json(const SocialGraph& g) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["nodes"] = ordered_json::array();
  for (const auto& [id, node] : g.nodes) {
    j["nodes"].push_back({{"id", id.value}, {"size", node.matches_played}});
  }
  j["edges"] = ordered_json::array();
  for (const SocialEdge& e : g.edges) {
    ordered_json je;
    je["source"] = e.pair.a().value;
    je["target"] = e.pair.b().value;
    je["kind"] = std::string(to_string(e.kind));
    je["weight"] = e.matches;
    je["thickness"] = e.max_streak;
    je["closeness"] = e.rank_closeness ? ordered_json(*e.rank_closeness) : ordered_json(nullptr);
    je["avg_rank_diff"] = e.avg_rank_diff ? ordered_json(*e.avg_rank_diff) : ordered_json(nullptr);
    j["edges"].push_back(std::move(je));
  }
  return j;
}

inline std::string export_json(const SocialGraph& g) { return graph_to_json(g).dump(); }

inline SocialGraph import_json(std::string_view text) {
  using nlohmann::json;
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidArgument, "graph JSON does not parse");
  SocialGraph g;
  try {
    for (const json& n : j.at("nodes")) {
      g.nodes[PlayerId(n.at("id").get<std::string>())].matches_played =
          n.at("size").get<std::size_t>();
    }
    for (const json& je : j.at("edges")) {
      SocialEdge e;
      e.pair = canonical_pair(je.at("source").get<std::string>(), je.at("target").get<std::string>());
      const auto kind = je.at("kind").get<std::string>();
      if (kind != "teammate" && kind != "opponent") throw std::invalid_argument("edge kind");
      e.kind = kind == "teammate" ? PairContext::kTeammate : PairContext::kOpponent;
      e.matches = je.at("weight").get<std::size_t>();
      e.max_streak = je.at("thickness").get<std::size_t>();
      if (!je.at("closeness").is_null()) e.rank_closeness = je["closeness"].get<double>();
      if (je.contains("avg_rank_diff") && !je["avg_rank_diff"].is_null()) {
        e.avg_rank_diff = je["avg_rank_diff"].get<double>();
      }
      g.edges.push_back(std::move(e));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("graph JSON: ") + e.what());
  }
  detail::sort_edges(g.edges);
  return g;
}

namespace detail {
inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline std::string shortest(double v) { return nlohmann::json(v).dump(); }
}  // namespace detail

/// Undirected DOT. Raw attributes only; colors are left to the renderer.
inline std::string export_dot(const SocialGraph& g) {
  std::string out = "graph social {\n";
  for (const auto& [id, node] : g.nodes) {
    out += "  " + detail::dot_quote(id.value) + " [size=" + std::to_string(node.matches_played) +
           "];\n";
  }
  for (const SocialEdge& e : g.edges) {
    out += "  " + detail::dot_quote(e.pair.a().value) + " -- " + detail::dot_quote(e.pair.b().value) +
           " [kind=" + std::string(to_string(e.kind)) + ", weight=" + std::to_string(e.matches) +
           ", thickness=" + std::to_string(e.max_streak);
    if (e.rank_closeness) out += ", closeness=" + detail::shortest(*e.rank_closeness);
    out += "];\n";
  }
  return out + "}\n";
}

}  // namespace collusion
