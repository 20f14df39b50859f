#pragma once

// Finite ergodic MDPs: representation, validation, simulation and the
// Markov-chain diagnostics (stationary law, mixing and hitting times)
// that every other module depends on.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "avgpg/rng.hpp"

namespace avgpg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row s holds the action distribution pi(.|s); shape S x A.
using PolicyTable = Matrix;

/// A finite MDP (S, A, r, P, rho).
///
/// `kernel` stores one transition row per state-action pair, row index
/// `s * n_actions + a`, so that P^pi is a plain matrix product.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  Matrix reward;     // S x A, entries in [0, 1]
  Matrix kernel;     // (S*A) x S, row-stochastic
  Vector init_dist;  // length S

  int row(int s, int a) const { return s * n_actions + a; }
  double transition(int s, int a, int next) const { return kernel(row(s, a), next); }
};

/// Throws NonStochasticRow, RewardOutOfRange or NotErgodic.
void validate_mdp(const TabularMdp& m);

/// Same checks as `validate_mdp` but without the ergodicity test.
void validate_shape(const TabularMdp& m);

/// P^pi(s, s') = sum_a P(s'|s,a) pi(a|s).
Matrix induced_kernel(const TabularMdp& m, const PolicyTable& probs);

/// Irreducible and aperiodic, judged on the support of `chain`.
bool is_ergodic_chain(const Matrix& chain, double support_tol = 0.0);

/// Unique stationary law of an ergodic chain via a direct linear solve in
/// which one balance equation is replaced by the simplex constraint.
Vector stationary_distribution(const Matrix& chain);

/// Total variation: half the L1 distance.
double tv_distance(const Eigen::Ref<const Vector>& p, const Eigen::Ref<const Vector>& q);

/// max_s TV((P)^t(s, .), d) for a precomputed power `chain_power`.
double max_tv_gap(const Matrix& chain_power, const Vector& stationary);

/// Smallest t >= 1 with max_s TV(P^t(s,.), d) <= 1/4. Throws
/// MixingCapExceeded when the gap is still above 1/4 at `t_cap`.
int mixing_time(const Matrix& chain, const Vector& stationary, int t_cap = 1 << 16);

/// Closed-form upper bound (4 t_mix / ln 2) * 2^(-N / t_mix) on the tail sum
/// sum_{t >= N} ||P^t(s,.) - d||_1.
double tail_sum_bound(int t_mix, double burn_in);

struct ChainDiagnostics {
  Matrix induced_kernel;  // P^pi
  Vector stationary;      // d^pi
  int t_mix = 0;
  double t_hit = 0.0;     // max_s 1 / d^pi(s)
  double tail_bound = 0.0;
};

struct ChainOptions {
  int t_cap = 1 << 16;
  double tail_burn_in = 0.0;  // N used for the tail bound
};

ChainDiagnostics induced_chain(const TabularMdp& m, const PolicyTable& probs,
                               const ChainOptions& options = {});

struct Step {
  int state = 0;
  int action = 0;
  double reward = 0.0;
};

/// A contiguous slice of experience with absolute time indices
/// [start_index, start_index + size() - 1].
struct Trajectory {
  std::int64_t start_index = 0;
  std::vector<Step> steps;
  int final_state = 0;

  int size() const { return static_cast<int>(steps.size()); }
  std::int64_t end_index() const { return start_index + size() - 1; }
  const Step& at(std::int64_t t) const { return steps[static_cast<std::size_t>(t - start_index)]; }
};

/// Cumulative tables for inverse-CDF sampling from a fixed (MDP, policy) pair.
class StepSampler {
 public:
  StepSampler(const TabularMdp& m, const PolicyTable& probs);

  int action(int s, Rng& rng) const;
  int next_state(int s, int a, Rng& rng) const;

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> action_cdf_;  // S x A
  std::vector<double> kernel_cdf_;  // (S*A) x S
};

Trajectory sample_trajectory(const TabularMdp& m, const PolicyTable& probs, int s0, int len,
                             std::int64_t start_index, Rng& rng);

/// A running environment: it owns the current state, the clock and its random
/// stream. Successive rollouts continue where the previous one stopped.
class Simulator {
 public:
  Simulator(const TabularMdp& m, std::uint64_t seed);
  Simulator(const TabularMdp& m, int start_state, std::uint64_t seed);

  Trajectory rollout(const PolicyTable& probs, int len);

  int state() const { return state_; }
  std::int64_t time() const { return time_; }
  Rng& rng() { return rng_; }

 private:
  const TabularMdp* mdp_;
  Rng rng_;
  int state_ = 0;
  std::int64_t time_ = 0;
};

/// Kernel rows are flat-Dirichlet vectors mixed with the uniform row at
/// weight `smoothing`; rewards i.i.d. U[0,1]; uniform initial distribution.
TabularMdp random_ergodic_mdp(int n_states, int n_actions, double smoothing, std::uint64_t seed);

nlohmann::json mdp_to_json(const TabularMdp& m);

/// Parses and validates. Shape problems raise ConfigInvalid naming the field.
TabularMdp mdp_from_json(const nlohmann::json& j);

}  // namespace avgpg
