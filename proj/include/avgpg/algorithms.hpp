#pragma once

// Epoch-based policy-gradient optimizers for average-reward MDPs:
//  - momentum PG with implicit gradient transport (look-ahead iterate),
//  - Hessian-aided momentum PG (second-order correction at a random
//    interpolation point),
//  - plain stochastic PG as a baseline.
// All of them run on a single uninterrupted simulator stream.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avgpg/estimators.hpp"
#include "avgpg/mdp.hpp"
#include "avgpg/policy.hpp"

namespace avgpg {

enum class Variant { Igt, Hessian, Vanilla };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Multiplier in front of t_mix t_hit (log2 T)^2 T^p in the theoretical epoch length.
inline constexpr double kEpochConstant = 63.0;

/// 1/6 for Igt, 0 otherwise.
double epoch_exponent(Variant v);

/// ceil(c_H * t_mix * t_hit * (log2 T)^2 * T^p).
int epoch_length(double c_H, int t_mix, double t_hit, std::int64_t T, double exponent);

struct ScheduleSpec {
  double G = 1.0;
  double mu = 1.0;
  Variant variant = Variant::Hessian;
  int H = 1;
  int K = 1;
  std::int64_t T = 1;
};

struct StepSizes {
  double gamma = 0.0;
  double eta = 0.0;
};

/// gamma_k = 6G / (mu (k+2)); eta_k = (2/(k+2))^{4/5} (Igt) or 2/(k+2).
StepSizes schedule(const ScheduleSpec& spec, int k);

/// Everything one epoch produced, kept for diagnostics and invariant checks.
struct EpochRecord {
  int k = 0;
  StepSizes step;
  Vector theta_prev;   // theta_{k-1}
  Vector theta;        // theta_k
  Vector theta_eval;   // look-ahead (Igt), interpolation (Hessian) or theta_k
  double q = 0.0;      // interpolation weight (Hessian only)
  Vector gradient;     // g
  Vector correction;   // v (Hessian only, otherwise empty)
  Vector direction_prev;
  Vector direction;    // d_k
  Vector theta_next;   // theta_{k+1}
  EstimatorStats stats;
};

struct RunResult {
  std::vector<double> reward_trace;
  std::vector<double> regret_trace;  // cumulative sum of (J* - r_t)
  std::vector<Vector> theta_snapshots;  // theta_1 .. theta_{K+1}
  std::vector<double> gain_trace;       // exact J(theta_k), filled when oracle logging is on
  std::vector<double> direction_norms;
  std::vector<EstimatorStats> estimator_stats;
  std::vector<EpochRecord> epochs;
  double optimal_gain = 0.0;
  int H = 0;
  int K = 0;

  double final_regret() const { return regret_trace.empty() ? 0.0 : regret_trace.back(); }
};

struct RunOptions {
  bool oracle_logging = false;
  /// Supplying J* skips the policy-iteration solve.
  std::optional<double> optimal_gain;
};

RunResult run_pg_igt(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched,
                     const EstimatorConfig& cfg, const PolicyParams& theta0, const PolicyParams& theta1,
                     std::uint64_t seed, const RunOptions& options = {});

RunResult run_hessian_pg(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched,
                         const EstimatorConfig& cfg, const PolicyParams& theta0, const PolicyParams& theta1,
                         std::uint64_t seed, const RunOptions& options = {});

RunResult run_vanilla_pg(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched,
                         const EstimatorConfig& cfg, const PolicyParams& theta0, std::uint64_t seed,
                         const RunOptions& options = {});

}  // namespace avgpg
