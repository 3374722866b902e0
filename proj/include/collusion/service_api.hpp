#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "collusion/detect.hpp"
#include "collusion/social_graph.hpp"

namespace collusion::service {

enum class VerdictStatus { kConfirmed, kRejected, kInconclusive };

inline std::string_view to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::kConfirmed: return "confirmed";
    case VerdictStatus::kRejected: return "rejected";
    case VerdictStatus::kInconclusive: return "inconclusive";
  }
  return "?";
}

inline std::optional<VerdictStatus> parse_status(std::string_view s) {
  if (s == "confirmed") return VerdictStatus::kConfirmed;
  if (s == "rejected") return VerdictStatus::kRejected;
  if (s == "inconclusive") return VerdictStatus::kInconclusive;
  return std::nullopt;
}

struct Verdict {
  PairKey pair;
  VerdictStatus status = VerdictStatus::kInconclusive;
  std::string notes;
  std::string reviewer;
  UtcTime timestamp;

  bool operator==(const Verdict&) const = default;
};

inline nlohmann::ordered_json verdict_to_json(const Verdict& v) {
  nlohmann::ordered_json j;
  j["pair_a"] = v.pair.a().value;
  j["pair_b"] = v.pair.b().value;
  j["status"] = std::string(to_string(v.status));
  j["notes"] = v.notes;
  j["reviewer"] = v.reviewer;
  j["timestamp"] = format_utc(v.timestamp);
  return j;
}

inline std::optional<Verdict> verdict_from_json(const nlohmann::json& j) {
  try {
    Verdict v;
    v.pair = canonical_pair(j.at("pair_a").get<std::string>(), j.at("pair_b").get<std::string>());
    auto status = parse_status(j.at("status").get<std::string>());
    auto ts = parse_utc(j.at("timestamp").get<std::string>());
    if (!status || !ts) return std::nullopt;
    v.status = *status;
    v.notes = j.at("notes").get<std::string>();
    v.reviewer = j.at("reviewer").get<std::string>();
    v.timestamp = *ts;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline UtcTime system_now() {
  using namespace std::chrono;
  return UtcTime{duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()};
}

/// Append-only verdict log, one JSON object per line. The in-memory state is
/// always exactly what a replay of the file from byte 0 produces.
class VerdictStore {
 public:
  explicit VerdictStore(std::filesystem::path path, std::function<UtcTime()> clock = system_now)
      : path_(std::move(path)), clock_(std::move(clock)) {
    const bool torn_tail = replay();
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error(ErrorCode::kIoError, "cannot open verdict log '" + path_.string() + "'");
    // Terminate a partial last line so the next record starts cleanly.
    if (torn_tail) out_ << '\n' << std::flush;
  }

  /// Appends unless it repeats the pair's latest verdict verbatim, in which
  /// case the stored verdict is returned unchanged.
  Verdict record(const PairKey& pair, VerdictStatus status, std::string notes,
                 std::string reviewer) {
    std::unique_lock lock(mutex_);
    auto it = history_.find(pair);
    if (it != history_.end()) {
      const Verdict& last = it->second.back();
      if (last.status == status && last.notes == notes && last.reviewer == reviewer) return last;
    }
    Verdict v{pair, status, std::move(notes), std::move(reviewer), clock_()};
    out_ << verdict_to_json(v).dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::kIoError, "verdict log write failed");
    history_[pair].push_back(v);
    ++total_;
    return v;
  }

  std::optional<Verdict> latest(const PairKey& pair) const {
    std::shared_lock lock(mutex_);
    auto it = history_.find(pair);
    if (it == history_.end()) return std::nullopt;
    return it->second.back();
  }

  std::vector<Verdict> history(const PairKey& pair) const {
    std::shared_lock lock(mutex_);
    auto it = history_.find(pair);
    return it == history_.end() ? std::vector<Verdict>{} : it->second;
  }

  std::map<PairKey, std::vector<Verdict>> snapshot() const {
    std::shared_lock lock(mutex_);
    return history_;
  }

  std::size_t total() const {
    std::shared_lock lock(mutex_);
    return total_;
  }

  /// Lines skipped during replay (e.g. a torn final write).
  std::size_t skipped_lines() const noexcept { return skipped_; }

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  /// Returns true when the file ends without a newline.
  bool replay() {
    if (!std::filesystem::exists(path_)) return false;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read verdict log '" + path_.string() + "'");
    std::string line;
    bool torn = false;
    while (std::getline(in, line)) {
      torn = in.eof();
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      auto v = j.is_discarded() ? std::nullopt : verdict_from_json(j);
      if (!v) {
        ++skipped_;
        continue;
      }
      history_[v->pair].push_back(std::move(*v));
      ++total_;
    }
    return torn;
  }

  std::filesystem::path path_;
  std::function<UtcTime()> clock_;
  mutable std::shared_mutex mutex_;
  std::ofstream out_;
  std::map<PairKey, std::vector<Verdict>> history_;
  std::size_t total_ = 0;
  std::size_t skipped_ = 0;
};

/// Immutable view served to readers; replaced wholesale on reload.
struct Snapshot {
  std::vector<FlaggedPair> report;
  std::map<PairKey, std::size_t> position;
  std::optional<Dataset> dataset;
  std::optional<SocialGraph> graph;
  std::optional<DatasetStats> stats;
};

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

struct ServiceOptions {
  std::size_t graph_min_matches = 3;
  std::size_t reference_teams = 20;
  std::size_t default_limit = 50;
  std::size_t max_limit = 1000;
};

inline std::shared_ptr<const Snapshot> make_snapshot(std::optional<std::vector<FlaggedPair>> report,
                                                     std::optional<Dataset> dataset,
                                                     const ServiceOptions& opts = {}) {
  auto snap = std::make_shared<Snapshot>();
  if (report) {
    snap->report = std::move(*report);
    std::sort(snap->report.begin(), snap->report.end(), [](const auto& l, const auto& r) {
      if (l.score.value != r.score.value) return l.score.value < r.score.value;
      return l.pair < r.pair;
    });
    for (std::size_t i = 0; i < snap->report.size(); ++i) snap->position[snap->report[i].pair] = i;
  }
  if (dataset) {
    const auto table = compute_pair_table(*dataset);
    snap->graph = build_graph(table, appearance_counts(*dataset),
                              {opts.graph_min_matches, opts.reference_teams});
    snap->stats = summarize(*dataset);
    snap->dataset = std::move(dataset);
  }
  return snap;
}

/// Request handling, independent of the HTTP transport.
class ReviewService {
 public:
  ReviewService(std::shared_ptr<const Snapshot> snapshot, std::shared_ptr<VerdictStore> store,
                bool report_loaded, ServiceOptions opts = {})
      : snapshot_(std::move(snapshot)),
        store_(std::move(store)),
        report_loaded_(report_loaded),
        opts_(opts) {}

  void swap_snapshot(std::shared_ptr<const Snapshot> next, bool report_loaded) {
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
    report_loaded_ = report_loaded;
  }

  Response list_pairs(const std::string& status, const std::string& limit_text,
                      const std::string& offset_text) const {
    auto [snap, loaded] = current();
    if (!loaded) return error(409, "no detection report loaded");
    static const std::set<std::string> kFilters = {"",         "all",      "unreviewed", "open",
                                                   "confirmed", "rejected", "inconclusive"};
    if (!kFilters.contains(status)) return error(400, "unknown status filter '" + status + "'");
    std::size_t limit = opts_.default_limit, offset = 0;
    if (!parse_count(limit_text, limit) || !parse_count(offset_text, offset)) {
      return error(400, "limit/offset must be non-negative integers");
    }
    limit = std::min(limit, opts_.max_limit);

    std::vector<const FlaggedPair*> rows;
    for (const FlaggedPair& f : snap->report) {
      const auto v = store_->latest(f.pair);
      const bool keep = status.empty() || status == "all" ||
                        (status == "unreviewed" && !v) ||
                        (status == "open" && (!v || v->status == VerdictStatus::kInconclusive)) ||
                        (v && to_string(v->status) == status);
      if (keep) rows.push_back(&f);
    }
    Response r;
    r.body["total"] = rows.size();
    r.body["offset"] = offset;
    r.body["limit"] = limit;
    r.body["items"] = nlohmann::ordered_json::array();
    for (std::size_t i = offset; i < rows.size() && i < offset + limit; ++i) {
      r.body["items"].push_back(queue_entry(*rows[i]));
    }
    return r;
  }

  Response pair_detail(const std::string& a, const std::string& b) const {
    auto [snap, loaded] = current();
    if (!loaded) return error(409, "no detection report loaded");
    auto key = lookup(*snap, a, b);
    if (!key) return error(404, "pair not in report");
    const FlaggedPair& f = snap->report[snap->position.at(*key)];
    Response r;
    r.body = queue_entry(f);
    r.body["timeline"] = nlohmann::ordered_json::array();
    r.body["teammate_timeline"] = nlohmann::ordered_json::array();
    if (snap->dataset) {
      std::map<std::string, UtcTime> started;
      for (const MatchRecord& m : snap->dataset->matches) started[m.match_id] = m.start_time;
      for (const PairObservation& o : pair_timeline(*snap->dataset, *key)) {
        nlohmann::ordered_json row;
        row["match_id"] = o.match_id;
        row["start_time"] = format_utc(started.at(o.match_id));
        row["distance"] = o.distance;
        row["rank_a"] = o.rank_a;
        row["rank_b"] = o.rank_b;
        if (o.rank_diff) row["rank_diff"] = *o.rank_diff;
        row["ordinal_a"] = o.match_ordinal_a;
        row["ordinal_b"] = o.match_ordinal_b;
        r.body[o.context == PairContext::kOpponent ? "timeline" : "teammate_timeline"].push_back(
            std::move(row));
      }
    }
    r.body["history"] = nlohmann::ordered_json::array();
    for (const Verdict& v : store_->history(*key)) r.body["history"].push_back(verdict_to_json(v));
    return r;
  }

  Response network(const std::string& a, const std::string& b, const std::string& radius_text) const {
    auto [snap, loaded] = current();
    if (!loaded) return error(409, "no detection report loaded");
    auto key = lookup(*snap, a, b);
    if (!key) return error(404, "pair not in report");
    if (!snap->graph) return error(409, "no dataset loaded");
    std::size_t radius = 1;
    if (!parse_count(radius_text, radius)) return error(400, "radius must be a non-negative integer");
    // Report pairs may lack graph edges; the ego view still shows both players.
    SocialGraph base = *snap->graph;
    for (const PlayerId* p : {&key->a(), &key->b()}) {
      if (!base.nodes.contains(*p)) {
        std::size_t played = 0;
        for (const MatchRecord& m : snap->dataset->matches) played += m.landings.contains(*p) ? 1 : 0;
        base.nodes[*p].matches_played = played;
      }
    }
    Response r;
    r.body = graph_to_json(ego_network(base, *key, radius));
    return r;
  }

  Response post_verdict(const std::string& a, const std::string& b, const std::string& body) {
    auto [snap, loaded] = current();
    if (!loaded) return error(409, "no detection report loaded");
    auto key = lookup(*snap, a, b);
    if (!key) return error(404, "pair not in report");
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("status") || !j["status"].is_string()) {
      return error(400, "body must be a JSON object with a string 'status'");
    }
    auto status = parse_status(j["status"].get<std::string>());
    if (!status) return error(400, "status must be confirmed, rejected or inconclusive");
    auto text = [&j](const char* field) -> std::optional<std::string> {
      if (!j.contains(field)) return std::string{};
      if (!j[field].is_string()) return std::nullopt;
      return j[field].get<std::string>();
    };
    auto notes = text("notes");
    auto reviewer = text("reviewer");
    if (!notes || !reviewer) return error(400, "notes and reviewer must be strings");
    Response r;
    r.body = verdict_to_json(store_->record(*key, *status, std::move(*notes), std::move(*reviewer)));
    return r;
  }

  Response stats() const {
    auto [snap, loaded] = current();
    Response r;
    r.body["dataset"] = snap->stats ? stats_to_json(*snap->stats) : nlohmann::ordered_json(nullptr);
    r.body["report_pairs"] = snap->report.size();
    std::map<std::string, std::size_t> tallies = {
        {"confirmed", 0}, {"rejected", 0}, {"inconclusive", 0}};
    std::size_t reviewed = 0;
    for (const auto& [pair, history] : store_->snapshot()) {
      ++tallies[std::string(to_string(history.back().status))];
      ++reviewed;
    }
    r.body["verdicts"] = {{"confirmed", tallies["confirmed"]},
                          {"rejected", tallies["rejected"]},
                          {"inconclusive", tallies["inconclusive"]},
                          {"reviewed_pairs", reviewed},
                          {"total_submissions", store_->total()}};
    return r;
  }

  const VerdictStore& store() const noexcept { return *store_; }

 private:
  std::pair<std::shared_ptr<const Snapshot>, bool> current() const {
    std::lock_guard lock(snapshot_mutex_);
    return {snapshot_, report_loaded_};
  }

  static Response error(int status, const std::string& message) {
    return {status, {{"error", message}}};
  }

  static bool parse_count(const std::string& text, std::size_t& out) {
    if (text.empty()) return true;
    std::size_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return false;
    out = v;
    return true;
  }

  static std::optional<PairKey> lookup(const Snapshot& snap, const std::string& a,
                                       const std::string& b) {
    if (a.empty() || b.empty() || a == b) return std::nullopt;
    PairKey key = canonical_pair(a, b);
    if (!snap.position.contains(key)) return std::nullopt;
    return key;
  }

  nlohmann::ordered_json queue_entry(const FlaggedPair& f) const {
    nlohmann::ordered_json j = flagged_to_json(f);
    const auto v = store_->latest(f.pair);
    j["verdict"] = v ? verdict_to_json(*v) : nlohmann::ordered_json(nullptr);
    return j;
  }

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::shared_ptr<VerdictStore> store_;
  bool report_loaded_;
  ServiceOptions opts_;
};

/// Registers the /api/v1 routes on an httplib server.
inline void bind_routes(httplib::Server& server, ReviewService& svc) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto param = [](const httplib::Request& req, const char* name) {
    return req.has_param(name) ? req.get_param_value(name) : std::string{};
  };
  server.Get("/api/v1/pairs", [&svc, send, param](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.list_pairs(param(req, "status"), param(req, "limit"), param(req, "offset")));
  });
  server.Get(R"(/api/v1/pairs/([^/]+)/([^/]+)/network)",
             [&svc, send, param](const httplib::Request& req, httplib::Response& res) {
               send(res, svc.network(req.matches[1], req.matches[2], param(req, "radius")));
             });
  server.Get(R"(/api/v1/pairs/([^/]+)/([^/]+))",
             [&svc, send](const httplib::Request& req, httplib::Response& res) {
               send(res, svc.pair_detail(req.matches[1], req.matches[2]));
             });
  server.Post(R"(/api/v1/pairs/([^/]+)/([^/]+)/verdict)",
              [&svc, send](const httplib::Request& req, httplib::Response& res) {
                send(res, svc.post_verdict(req.matches[1], req.matches[2], req.body));
              });
  server.Get("/api/v1/stats", [&svc, send](const httplib::Request&, httplib::Response& res) {
    send(res, svc.stats());
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
  });
}

}  // namespace collusion::service
