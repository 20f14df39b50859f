#pragma once

// Experiment configuration, seeded execution and persistence of traces and
// summaries. This is the layer behind the `avgpg` command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avgpg/algorithms.hpp"
#include "avgpg/estimators.hpp"
#include "avgpg/mdp.hpp"
#include "avgpg/policy.hpp"

namespace avgpg {

struct ExperimentConfig {
  nlohmann::json mdp;     // inline MDP or generator settings {S, A, smoothing, seed}
  nlohmann::json policy;  // {kind, dim, feature_seed | features, clamp_logits}
  Variant algorithm = Variant::Hessian;
  std::int64_t T = 0;
  double c_H = 1.0;
  std::optional<int> N_override;
  std::optional<double> G_override;
  std::optional<double> mu_override;
  std::vector<std::uint64_t> seeds;
  bool oracle_logging = false;
  std::filesystem::path output_dir = "avgpg_out";
  nlohmann::json source;  // the document this config was parsed from
};

/// Throws ConfigInvalid naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

TabularMdp build_mdp(const nlohmann::json& mdp_json);

/// Everything derived from a config before any run starts.
struct ResolvedExperiment {
  TabularMdp mdp;
  PolicySpec policy = PolicySpec::tabular(1, 1);
  PolicyParams theta0;
  PolicyParams theta1;
  ScheduleSpec schedule;
  EstimatorConfig estimator;
  int t_mix = 0;
  double t_hit = 0.0;
  double optimal_gain = 0.0;
  std::vector<int> optimal_actions;
};

ResolvedExperiment resolve(const ExperimentConfig& config);

RunResult run_once(const ResolvedExperiment& ex, std::uint64_t seed, bool oracle_logging);

struct SummaryRecord {
  std::uint64_t seed = 0;
  double final_regret = 0.0;
  double final_window_reward = 0.0;  // mean reward over the last 10% of steps
  double optimal_gain = 0.0;
  double final_gain = 0.0;           // exact J(theta_{K+1})
  double gain_gap = 0.0;             // J* - J(theta_{K+1})
  double runtime_seconds = 0.0;
};

nlohmann::json summary_to_json(const ResolvedExperiment& ex, const ExperimentConfig& config,
                               const std::vector<SummaryRecord>& records);

/// Header `t,epoch,reward,instant_regret,cum_regret`, one row per step.
void write_trace_csv(const std::filesystem::path& path, const RunResult& result);

std::string format_double(double x);

/// Runs every seed, writes trace_seed_<seed>.csv files and summary.json.
/// `AVGPG_OUTPUT_DIR` overrides the configured directory.
std::vector<SummaryRecord> run_experiment(const ExperimentConfig& config, int jobs = 1);

/// Cartesian product of `grid` (field -> list of values) applied on top of
/// the base config document; combination i writes to <output_dir>/sweep_<i>.
nlohmann::json run_sweep(const nlohmann::json& base, const nlohmann::json& grid, int jobs = 1);

/// J*, pi*, d^{pi*}, t_mix and t_hit of an MDP.
nlohmann::json solve_report(const TabularMdp& m);

}  // namespace avgpg
