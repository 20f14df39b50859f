#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "avgpg/checks.hpp"
#include "avgpg/error.hpp"
#include "avgpg/harness.hpp"

namespace {

void print_error(const std::string& kind, const std::string& message) {
  const nlohmann::json line = {{"error", kind}, {"message", message}};
  std::cerr << line.dump() << std::endl;
}

nlohmann::json read_json(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw avgpg::Error(avgpg::ErrorKind::ConfigInvalid, "field '" + field + "': cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw avgpg::Error(avgpg::ErrorKind::ConfigInvalid, "field '" + field + "': " + e.what());
  }
}

// Shortest text that parses back to the same double; for human-readable lines.
std::string brief(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

int cmd_run(const std::string& path, int jobs) {
  const avgpg::ExperimentConfig config = avgpg::parse_config(read_json(path, "config"));
  const auto records = avgpg::run_experiment(config, jobs);
  for (const auto& r : records) {
    std::printf("seed %llu: final regret %s, gain gap %s\n", static_cast<unsigned long long>(r.seed),
                avgpg::format_double(r.final_regret).c_str(), avgpg::format_double(r.gain_gap).c_str());
  }
  return 0;
}

int cmd_check(const std::string& level) {
  const auto lvl = level == "full" ? avgpg::CheckLevel::Full : avgpg::CheckLevel::Fast;
  bool all = true;
  double total = 0.0;
  avgpg::run_checks(lvl, {}, [&](const avgpg::CheckResult& r) {
    std::printf("%s\n", avgpg::format_check_line(r).c_str());
    std::fflush(stdout);
    all = all && r.passed;
    total += r.seconds;
  });
  if (lvl == avgpg::CheckLevel::Fast && total > 60.0) {
    std::printf("warning: fast level took %.1fs (budget 60s)\n", total);
  }
  std::printf("%s (%.1fs)\n", all ? "all checks passed" : "some checks FAILED", total);
  return all ? 0 : 1;
}

int cmd_solve(const std::string& path) {
  const avgpg::TabularMdp m = avgpg::mdp_from_json(read_json(path, "mdp"));
  const nlohmann::json report = avgpg::solve_report(m);
  std::printf("J* = %s\n", brief(report["optimal_gain"].get<double>()).c_str());
  std::printf("pi* = %s\n", report["optimal_actions"].dump().c_str());
  std::printf("d^pi* = %s\n", report["stationary"].dump().c_str());
  std::printf("t_mix = %d\n", report["t_mix"].get<int>());
  std::printf("t_hit = %s\n", brief(report["t_hit"].get<double>()).c_str());
  std::printf("%s\n", report.dump().c_str());
  return 0;
}

int cmd_sweep(const std::string& path, const std::string& grid_path, int jobs) {
  const nlohmann::json base = read_json(path, "config");
  const nlohmann::json grid = read_json(grid_path, "grid");
  const nlohmann::json index = avgpg::run_sweep(base, grid, jobs);
  std::printf("%s\n", index.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy-gradient experiments on small average-reward MDPs"};
  app.require_subcommand(1);

  std::string config_path, mdp_path, grid_path, level = "fast";
  int jobs = 1;

  auto* run = app.add_subcommand("run", "Run every seed of an experiment config");
  run->add_option("config", config_path, "Experiment JSON")->required();
  run->add_option("--jobs,-j", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);

  auto* check = app.add_subcommand("check", "Run the verification suites");
  check->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));

  auto* solve = app.add_subcommand("solve", "Print J*, pi*, d^pi*, t_mix and t_hit of an MDP");
  solve->add_option("mdp", mdp_path, "MDP JSON")->required();

  auto* sweep = app.add_subcommand("sweep", "Run a grid of configs");
  sweep->add_option("config", config_path, "Base experiment JSON")->required();
  sweep->add_option("--grid", grid_path, "Grid JSON: field -> list of values")->required();
  sweep->add_option("--jobs,-j", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, jobs);
    if (*check) return cmd_check(level);
    if (*solve) return cmd_solve(mdp_path);
    if (*sweep) return cmd_sweep(config_path, grid_path, jobs);
  } catch (const avgpg::Error& e) {
    print_error(std::string(avgpg::to_string(e.kind())), e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 3;
  }
  return 1;
}
