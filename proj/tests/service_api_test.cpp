#include <atomic>
#include <fstream>
#include <numeric>
#include <thread>

#include <gtest/gtest.h>

#include <httplib.h>

#include "collusion/service_api.hpp"
#include "collusion/simulate.hpp"
#include "support.hpp"

namespace collusion::service {
namespace {

struct World {
  Dataset data;
  GroundTruth truth;
  std::vector<FlaggedPair> report;
};

const World& world() {
  static const World w = [] {
    SimConfig cfg;
    cfg.num_players = 600;
    cfg.num_matches = 400;
    cfg.colluder_pairs = 6;
    cfg.colluder_strength = 1.0;
    cfg.seed = 12;
    auto [d, gt] = generate(cfg);
    DetectConfig dc;
    dc.threshold_mode = ThresholdMode::kTopK;
    dc.threshold_value = 25;
    auto report = run_detection(d, dc);
    return World{std::move(d), std::move(gt), std::move(report)};
  }();
  return w;
}

std::function<UtcTime()> ticking_clock() {
  auto t = std::make_shared<std::atomic<std::int64_t>>(1'700'000'000'000);
  return [t] { return UtcTime{t->fetch_add(1000)}; };
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::make_unique<testing::TempDir>("service");
    store_ = std::make_shared<VerdictStore>(log_path(), ticking_clock());
    svc_ = std::make_unique<ReviewService>(make_snapshot(world().report, world().data), store_,
                                           true);
  }

  std::filesystem::path log_path() const { return dir_->path() / "verdicts.jsonl"; }
  const FlaggedPair& top(std::size_t i = 0) const { return world().report.at(i); }

  std::unique_ptr<testing::TempDir> dir_;
  std::shared_ptr<VerdictStore> store_;
  std::unique_ptr<ReviewService> svc_;
};

TEST_F(ServiceTest, ListPagination) {
  const Response r = svc_->list_pairs("", "5", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["total"], world().report.size());
  ASSERT_EQ(r.body["items"].size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.body["items"][i]["pair_a"], top(i).pair.a().value);
    EXPECT_EQ(r.body["items"][i]["pair_b"], top(i).pair.b().value);
  }
  const Response past = svc_->list_pairs("all", "10", "1000");
  EXPECT_EQ(past.body["items"].size(), 0u);
  EXPECT_EQ(past.body["total"], world().report.size());
  EXPECT_EQ(svc_->list_pairs("confirmed", "", "").body["total"], 0);
}

TEST_F(ServiceTest, BadRequests) {
  EXPECT_EQ(svc_->list_pairs("maybe", "", "").status, 400);
  EXPECT_EQ(svc_->list_pairs("", "-1", "").status, 400);
  EXPECT_EQ(svc_->pair_detail("nobody", "else").status, 404);
  EXPECT_EQ(svc_->pair_detail("same", "same").status, 404);
  const std::string a = top().pair.a().value, b = top().pair.b().value;
  EXPECT_EQ(svc_->post_verdict(a, b, "not json").status, 400);
  EXPECT_EQ(svc_->post_verdict(a, b, R"({"status":"guilty"})").status, 400);
  EXPECT_EQ(svc_->post_verdict(a, b, R"({"status":"confirmed","notes":3})").status, 400);
  EXPECT_EQ(svc_->network(a, b, "x").status, 400);
  EXPECT_EQ(store_->total(), 0u);
}

TEST_F(ServiceTest, NoReportLoadedIsConflict) {
  ReviewService empty(make_snapshot(std::nullopt, std::nullopt), store_, false);
  EXPECT_EQ(empty.list_pairs("", "", "").status, 409);
  EXPECT_EQ(empty.pair_detail("a", "b").status, 409);
  EXPECT_EQ(empty.post_verdict("a", "b", R"({"status":"confirmed"})").status, 409);
  EXPECT_EQ(empty.stats().status, 200);
}

TEST_F(ServiceTest, DetailTimelineAndCanonicalization) {
  for (std::size_t i = 0; i < 5; ++i) {
    const FlaggedPair& f = top(i);
    const Response fwd = svc_->pair_detail(f.pair.a().value, f.pair.b().value);
    const Response rev = svc_->pair_detail(f.pair.b().value, f.pair.a().value);
    ASSERT_EQ(fwd.status, 200);
    EXPECT_EQ(fwd.body, rev.body);
    const auto& timeline = fwd.body["timeline"];
    ASSERT_EQ(timeline.size(), f.features.num_matches_opp);
    double total = 0.0;
    for (const auto& row : timeline) total += row["distance"].get<double>();
    EXPECT_NEAR(total / static_cast<double>(timeline.size()), f.features.avg_distance_opp, 1e-9);
    EXPECT_EQ(fwd.body["teammate_timeline"].size(), f.features.num_matches_team);
  }
}

TEST_F(ServiceTest, NetworkRadius) {
  const FlaggedPair& f = top();
  const Response zero = svc_->network(f.pair.a().value, f.pair.b().value, "0");
  ASSERT_EQ(zero.status, 200);
  EXPECT_EQ(zero.body["nodes"].size(), 2u);
  const Response one = svc_->network(f.pair.a().value, f.pair.b().value, "1");
  EXPECT_GE(one.body["nodes"].size(), 2u);
  for (const auto& e : zero.body["edges"]) {
    EXPECT_TRUE((e["source"] == f.pair.a().value && e["target"] == f.pair.b().value));
  }
}

TEST_F(ServiceTest, VerdictReadYourWriteAndLatestWins) {
  const std::string a = top().pair.a().value, b = top().pair.b().value;
  ASSERT_EQ(svc_->post_verdict(b, a, R"({"status":"confirmed","reviewer":"r1"})").status, 200);
  EXPECT_EQ(svc_->pair_detail(a, b).body["verdict"]["status"], "confirmed");
  EXPECT_EQ(svc_->list_pairs("confirmed", "", "").body["total"], 1);
  EXPECT_EQ(svc_->list_pairs("unreviewed", "", "").body["total"], world().report.size() - 1);

  svc_->post_verdict(a, b, R"({"status":"rejected","notes":"duo queue","reviewer":"r2"})");
  const Response detail = svc_->pair_detail(a, b);
  EXPECT_EQ(detail.body["verdict"]["status"], "rejected");
  EXPECT_EQ(detail.body["history"].size(), 2u);

  // Resubmitting the latest verdict verbatim does not append.
  svc_->post_verdict(a, b, R"({"status":"rejected","notes":"duo queue","reviewer":"r2"})");
  EXPECT_EQ(store_->total(), 2u);
  EXPECT_EQ(svc_->stats().body["verdicts"]["rejected"], 1);
  EXPECT_EQ(svc_->stats().body["verdicts"]["total_submissions"], 2);
}

TEST_F(ServiceTest, ReplayReconstructsState) {
  for (std::size_t i = 0; i < 10; ++i) {
    const char* status = i % 3 == 0 ? "confirmed" : (i % 3 == 1 ? "rejected" : "inconclusive");
    svc_->post_verdict(top(i % 7).pair.a().value, top(i % 7).pair.b().value,
                       std::string(R"({"status":")") + status + R"(","notes":"n)" +
                           std::to_string(i) + "\"}");
  }
  const auto before = store_->snapshot();
  const std::size_t total = store_->total();
  store_.reset();
  svc_.reset();
  // Garbage from a torn write is skipped, not fatal.
  { std::ofstream(log_path(), std::ios::app) << "{\"pair_a\":"; }
  VerdictStore reopened(log_path());
  EXPECT_EQ(reopened.snapshot(), before);
  EXPECT_EQ(reopened.total(), total);
  EXPECT_EQ(reopened.skipped_lines(), 1u);
  reopened.record(top().pair, VerdictStatus::kConfirmed, "after crash", "r9");
  const VerdictStore third(log_path());
  EXPECT_EQ(third.total(), total + 1);
  EXPECT_EQ(third.latest(top().pair)->notes, "after crash");
}

TEST_F(ServiceTest, ConcurrentPostsKeepEveryWrite) {
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < 8; ++t) {
    workers.emplace_back([this, t] {
      for (std::size_t i = t; i < world().report.size(); i += 8) {
        const Response r = svc_->post_verdict(top(i).pair.a().value, top(i).pair.b().value,
                                              R"({"status":"inconclusive"})");
        EXPECT_EQ(r.status, 200);
      }
    });
  }
  workers.clear();
  EXPECT_EQ(store_->total(), world().report.size());
  EXPECT_EQ(VerdictStore(log_path()).snapshot(), store_->snapshot());
  EXPECT_EQ(svc_->list_pairs("open", "", "").body["total"], world().report.size());
}

TEST_F(ServiceTest, HttpRoutes) {
  httplib::Server server;
  bind_routes(server, *svc_);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::jthread loop([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const std::string a = top().pair.a().value, b = top().pair.b().value;
  auto list = client.Get("/api/v1/pairs?limit=3");
  ASSERT_TRUE(list);
  EXPECT_EQ(list->status, 200);
  EXPECT_EQ(nlohmann::json::parse(list->body)["items"].size(), 3u);

  auto post = client.Post("/api/v1/pairs/" + b + "/" + a + "/verdict",
                          R"({"status":"confirmed"})", "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 200);
  auto detail = client.Get("/api/v1/pairs/" + a + "/" + b);
  ASSERT_TRUE(detail);
  EXPECT_EQ(nlohmann::json::parse(detail->body)["verdict"]["status"], "confirmed");
  auto net = client.Get("/api/v1/pairs/" + a + "/" + b + "/network?radius=0");
  ASSERT_TRUE(net);
  EXPECT_EQ(nlohmann::json::parse(net->body)["nodes"].size(), 2u);
  auto missing = client.Get("/api/v1/pairs/zz1/zz2");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto stats = client.Get("/api/v1/stats");
  ASSERT_TRUE(stats);
  EXPECT_EQ(nlohmann::json::parse(stats->body)["verdicts"]["confirmed"], 1);
  server.stop();
}

}  // namespace
}  // namespace collusion::service
