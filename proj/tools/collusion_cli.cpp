// Command-line entry point: simulate, ingest, stats, features, detect, graph,
// evaluate and serve.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "collusion/collusion.hpp"

namespace {

using namespace collusion;
namespace fs = std::filesystem;

struct Globals {
  bool json_errors = false;
  std::size_t threads = 0;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

std::pair<Dataset, IngestReport> load(const std::string& dir, const Globals& g) {
  return load_dataset_dir(dir, {2, resolve_threads(g.threads)});
}

nlohmann::ordered_json ingest_report_json(const IngestReport& r) {
  nlohmann::ordered_json j;
  j["matches_accepted"] = r.matches_accepted;
  j["matches_rejected"] = r.matches_rejected;
  j["players_seen"] = r.players_seen;
  j["violations"] = nlohmann::ordered_json::array();
  for (const auto& v : r.violations) {
    j["violations"].push_back({{"match_id", v.match_id}, {"violation", std::string(to_string(v.violation))}});
  }
  return j;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-team collusion detection for team-based match telemetry"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json_errors, "Report errors as JSON on stderr");
  app.add_option("--threads", g.threads, "Worker threads per stage (0 = machine parallelism)")
      ->capture_default_str();

  // simulate
  SimConfig sim;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with planted colluders");
  simulate->add_option("--players", sim.num_players, "Population size")->capture_default_str();
  simulate->add_option("--matches", sim.num_matches, "Number of matches")->capture_default_str();
  simulate->add_option("--colluders", sim.colluder_pairs, "Planted colluding pairs")->capture_default_str();
  simulate->add_option("--strength", sim.colluder_strength, "Colluder signal strength in [0,1]")
      ->capture_default_str();
  simulate->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  simulate->add_option("--team-size", sim.team_size, "Players per team")->capture_default_str();
  simulate->add_option("--teams", sim.teams_per_match, "Teams per match")->capture_default_str();
  simulate->add_option("--friendships", sim.background_friendships, "Random background friendships")
      ->capture_default_str();
  simulate->add_option("--out", sim_out, "Output directory")->required();

  // ingest
  std::string ingest_dir;
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset directory and print the ingest report");
  ingest->add_option("--data", ingest_dir, "Dataset directory")->required();

  // stats
  std::string stats_dir;
  std::size_t stats_min_player = 1;
  auto* stats = app.add_subcommand("stats", "Print the gameplay statistics panel");
  stats->add_option("--data", stats_dir, "Dataset directory")->required();
  stats->add_option("--min-player-matches", stats_min_player, "Drop players with fewer matches")
      ->capture_default_str();

  // features
  std::string feat_dir, feat_out, feat_context = "opponent";
  std::size_t feat_min_shared = 5, feat_min_player = 3;
  auto* features = app.add_subcommand("features", "Export the pair feature table");
  features->add_option("--data", feat_dir, "Dataset directory")->required();
  features->add_option("--out", feat_out, "Output CSV")->required();
  features->add_option("--min-shared", feat_min_shared, "Minimum shared matches")->capture_default_str();
  features->add_option("--min-player-matches", feat_min_player, "Drop players with fewer matches")
      ->capture_default_str();
  features->add_option("--context", feat_context, "opponent or teammate")
      ->check(CLI::IsMember({"opponent", "teammate"}))
      ->capture_default_str();

  // detect
  DetectConfig det;
  std::string det_dir, det_out, det_jsonl, det_model, det_mode = "score_zero";
  std::size_t det_k = 20;
  double det_contamination = 0.05;
  bool det_no_scale = false;
  auto* detect = app.add_subcommand("detect", "Score opponent pairs and write the ranked report");
  detect->add_option("--data", det_dir, "Dataset directory")->required();
  detect->add_option("--min-shared", det.min_shared_matches, "Minimum shared opponent matches")
      ->capture_default_str();
  detect->add_option("--min-player-matches", det.min_player_matches, "Drop players with fewer matches")
      ->capture_default_str();
  detect->add_option("--trees", det.forest.n_trees, "Isolation trees")->capture_default_str();
  detect->add_option("--subsample", det.forest.subsample, "Samples per tree")->capture_default_str();
  detect->add_option("--seed", det.forest.seed, "Forest seed")->capture_default_str();
  detect->add_option("--mode", det_mode, "score_zero, top_k or contamination")
      ->check(CLI::IsMember({"score_zero", "top_k", "contamination"}))
      ->capture_default_str();
  detect->add_option("--k", det_k, "Pairs kept in top_k mode")->capture_default_str();
  detect->add_option("--contamination", det_contamination, "Fraction kept in contamination mode")
      ->capture_default_str();
  detect->add_flag("--no-scale", det_no_scale, "Disable min-max feature scaling");
  detect->add_option("--out", det_out, "Report CSV")->required();
  detect->add_option("--jsonl", det_jsonl, "Also write the report as JSON lines");
  detect->add_option("--model-out", det_model, "Write the fitted forest");

  // graph
  std::string graph_dir, graph_out, graph_format = "json";
  GraphOptions graph_opts;
  auto* graph = app.add_subcommand("graph", "Export the teammate/opponent social graph");
  graph->add_option("--data", graph_dir, "Dataset directory")->required();
  graph->add_option("--format", graph_format, "json or dot")
      ->check(CLI::IsMember({"json", "dot"}))
      ->capture_default_str();
  graph->add_option("--min-matches", graph_opts.min_matches, "Minimum shared matches per edge")
      ->capture_default_str();
  graph->add_option("--teams", graph_opts.reference_teams, "Team count used for rank closeness")
      ->capture_default_str();
  graph->add_option("--out", graph_out, "Output file")->required();

  // evaluate
  std::string eval_report, eval_truth;
  std::size_t eval_k = 20;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare a report with planted ground truth");
  evaluate_cmd->add_option("--report", eval_report, "Report CSV")->required();
  evaluate_cmd->add_option("--truth", eval_truth, "Ground-truth CSV")->required();
  evaluate_cmd->add_option("--k", eval_k, "Cut-off")->capture_default_str();

  // serve
  std::string serve_report = env_or("COLL_REPORT", "");
  std::string serve_data = env_or("COLL_DATA", "");
  std::string serve_listen = env_or("COLL_LISTEN", "127.0.0.1:8080");
  std::string serve_verdicts = env_or("COLL_VERDICTS", "");
  auto* serve = app.add_subcommand("serve", "Serve the review API (env: COLL_LISTEN, COLL_REPORT, COLL_DATA, COLL_VERDICTS)");
  serve->add_option("--report", serve_report, "Report CSV")->capture_default_str();
  serve->add_option("--data", serve_data, "Dataset directory")->capture_default_str();
  serve->add_option("--listen", serve_listen, "host:port (port 0 picks a free port)")->capture_default_str();
  serve->add_option("--verdicts", serve_verdicts, "Verdict log path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (g.json_errors && e.get_exit_code() != 0) {
      std::cerr << nlohmann::json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
      return 1;
    }
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) {
      auto [d, gt] = generate(sim);
      write_dataset(d, gt, sim_out);
      print_json({{"matches", d.matches.size()},
                  {"players", appearance_counts(d).size()},
                  {"planted_pairs", gt.colluding_pairs.size()},
                  {"out", sim_out}});
    } else if (*ingest) {
      auto [d, report] = load(ingest_dir, g);
      print_json(ingest_report_json(report));
    } else if (*stats) {
      auto [d, report] = load(stats_dir, g);
      print_json(stats_to_json(summarize(filter_active_players(d, stats_min_player), {},
                                         resolve_threads(g.threads))));
    } else if (*features) {
      auto [d, report] = load(feat_dir, g);
      const auto ctx = feat_context == "teammate" ? PairContext::kTeammate : PairContext::kOpponent;
      const auto rows = extract_pairs(filter_active_players(d, feat_min_player), feat_min_shared, ctx,
                                      {{}, resolve_threads(g.threads)});
      auto out = open_output(feat_out);
      out << "pair_a,pair_b,n_opp,n_team,streak,avg_dist,avg_rank_diff,acquaintance\n";
      for (const PairFeatures& f : rows) {
        const bool team = ctx == PairContext::kTeammate;
        out << f.pair.a().value << ',' << f.pair.b().value << ',' << f.num_matches_opp << ','
            << f.num_matches_team << ',' << (team ? f.max_consecutive_team : f.max_consecutive_opp)
            << ',' << format_double(team ? f.avg_distance_team.value_or(0.0) : f.avg_distance_opp)
            << ',' << format_double(f.avg_rank_diff_opp) << ',' << (f.acquaintance ? 1 : 0) << '\n';
      }
      std::cerr << rows.size() << " pairs written to " << feat_out << '\n';
    } else if (*detect) {
      det.threshold_mode = parse_threshold_mode(det_mode);
      det.threshold_value = det.threshold_mode == ThresholdMode::kTopK ? static_cast<double>(det_k)
                            : det.threshold_mode == ThresholdMode::kContamination ? det_contamination
                                                                                   : 0.0;
      det.scale_features = !det_no_scale;
      det.threads = resolve_threads(g.threads);
      auto [d, report] = load(det_dir, g);
      const auto run = run_detection_with_model(d, det);
      const auto& flagged = run.ranked;
      {
        auto out = open_output(det_out);
        write_report_csv(out, flagged);
      }
      if (!det_jsonl.empty()) {
        auto out = open_output(det_jsonl);
        write_report_jsonl(out, flagged);
      }
      if (!det_model.empty()) {
        auto out = open_output(det_model);
        out << iforest::serialize(run.model) << '\n';
      }
      std::cerr << flagged.size() << " pairs flagged\n";
    } else if (*graph) {
      auto [d, report] = load(graph_dir, g);
      const auto table = compute_pair_table(d, {{}, resolve_threads(g.threads)});
      const auto sg = build_graph(table, appearance_counts(d), graph_opts);
      auto out = open_output(graph_out);
      out << (graph_format == "dot" ? export_dot(sg) : export_json(sg) + "\n");
    } else if (*evaluate_cmd) {
      const auto report = load_report(eval_report);
      const auto gt = load_ground_truth(eval_truth);
      const auto r = evaluate(report, gt, eval_k);
      print_json({{"k", r.k},
                  {"planted", gt.colluding_pairs.size()},
                  {"planted_found", r.planted_found},
                  {"recall_at_k", r.recall_at_k},
                  {"precision_at_k", r.precision_at_k}});
    } else if (*serve) {
      if (serve_verdicts.empty()) {
        throw Error(ErrorCode::kConfigError, "--verdicts (or COLL_VERDICTS) is required");
      }
      std::optional<std::vector<FlaggedPair>> report;
      if (!serve_report.empty()) report = load_report(serve_report);
      std::optional<Dataset> data;
      if (!serve_data.empty()) data = load(serve_data, g).first;
      const bool loaded = report.has_value();
      auto store = std::make_shared<service::VerdictStore>(serve_verdicts);
      service::ReviewService svc(service::make_snapshot(std::move(report), std::move(data)), store,
                                 loaded);

      const auto colon = serve_listen.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::kConfigError, "--listen must be host:port");
      const std::string host = serve_listen.substr(0, colon);
      const int port = std::stoi(serve_listen.substr(colon + 1));

      httplib::Server server;
      service::bind_routes(server, svc);
      const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
      if (bound < 0) throw Error(ErrorCode::kIoError, "cannot bind " + serve_listen);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cout << "listening on " << host << ':' << bound << std::endl;
      server.listen_after_bind();
    }
  } catch (const Error& e) {
    if (g.json_errors) {
      std::cerr << nlohmann::json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump()
                << '\n';
    } else {
      std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
  } catch (const std::exception& e) {
    if (g.json_errors) {
      std::cerr << nlohmann::json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    } else {
      std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
  }
  return 0;
}
