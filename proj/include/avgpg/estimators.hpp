#pragma once

// Trajectory-based estimators: sub-trajectory value/advantage estimates,
// the truncated policy-gradient estimate g, the surrogate Phi with its
// gradient and Hessian, and the Hessian estimate B together with its
// matrix-free product.

#include <cstdint>
#include <vector>

#include "avgpg/mdp.hpp"
#include "avgpg/policy.hpp"

namespace avgpg {

struct EstimatorConfig {
  int N = 1;               // burn-in and sub-trajectory length
  std::int64_t T = 1;      // horizon used to derive N
  double pi_floor = 0.0;   // 0 disables the underflow check
};

/// 7 * t_mix * ceil(log2 T), at least 1.
int default_burn_in(int t_mix, std::int64_t T);

struct ValueEstimates {
  double v_hat = 0.0;
  double q_hat = 0.0;
  int visits = 0;
  std::vector<std::int64_t> visit_starts;
  std::vector<double> visit_sums;

  double advantage() const { return q_hat - v_hat; }
};

/// Sub-trajectory scan for one (s, a): disjoint length-N windows starting in
/// s, the next search resuming 2N steps after each hit.
ValueEstimates value_q_estimates(const Trajectory& tau, int s, int a, const Vector& probs_at_s,
                                 const EstimatorConfig& cfg);

/// Per-state scan results for a whole trajectory. Everything the gradient
/// and Hessian estimates need from the scan depends only on (tau, s, N).
class VisitTable {
 public:
  VisitTable(const Trajectory& tau, int n_states, int n_actions, int N);

  int visits(int s) const { return visits_[static_cast<std::size_t>(s)]; }
  /// sum_j y_j / i, or 0 when i = 0.
  double mean_sum(int s) const;
  /// sum_j y_j 1(a_{xi_j} = a) / i, or 0 when i = 0.
  double mean_sum_with_action(int s, int a) const;

 private:
  int n_actions_;
  std::vector<int> visits_;
  std::vector<double> sum_;
  std::vector<double> sum_by_action_;
};

/// g(theta, tau) = 1/(|tau|-N) sum_{t >= t_s+N} A_hat(s_t,a_t) score(s_t,a_t).
Vector grad_estimate(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                     const EstimatorConfig& cfg);

struct EstimatorStats {
  double mean_visits = 0.0;       // average i over the states occurring after burn-in
  double zero_visit_fraction = 0.0;  // share of post-burn-in steps whose state has i = 0
};

EstimatorStats estimator_stats(const Trajectory& tau, int n_states, int n_actions, const EstimatorConfig& cfg);

struct PhiReport {
  double phi = 0.0;
  Vector grad;
  Matrix hess;
  std::vector<double> psi1;
  std::vector<double> psi2;
  Vector logp_score;
};

/// Phi(., tau) with its trajectory weights Psi frozen. The weights are
/// computed from raw trajectory data only (Psi1 = -V_hat, Psi2 = -Q_hat * pi
/// = -sum_j y_j 1(a_{xi_j} = a_t) / i), so evaluating at any theta reuses them.
class PhiFunctional {
 public:
  PhiFunctional(const Trajectory& tau, int n_states, int n_actions, const EstimatorConfig& cfg);

  const std::vector<double>& psi1() const { return psi1_; }
  const std::vector<double>& psi2() const { return psi2_; }

  double value(const PolicySpec& spec, const PolicyParams& theta) const;
  Vector gradient(const PolicySpec& spec, const PolicyParams& theta) const;
  Matrix hessian(const PolicySpec& spec, const PolicyParams& theta) const;
  /// sum over all steps of score(s_t, a_t): the theta-gradient of log p(tau).
  Vector logp_score(const PolicySpec& spec, const PolicyParams& theta) const;

  PhiReport evaluate(const PolicySpec& spec, const PolicyParams& theta) const;

  /// B u without forming any d x d matrix.
  Vector hessian_vector_product(const PolicySpec& spec, const PolicyParams& theta, const Vector& u) const;

 private:
  struct Group {
    int state;
    int action;
    double psi1_sum;  // sum of Psi1 over window steps with this (s, a)
    double psi2_sum;
    int full_count;   // occurrences over the whole trajectory
  };

  std::vector<int> window_states_;
  std::vector<int> window_actions_;
  std::vector<double> psi1_;
  std::vector<double> psi2_;
  std::vector<Group> groups_;
  int n_states_;
  int n_actions_;
  int window_;
  double pi_floor_;
};

PhiReport phi_report(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                     const EstimatorConfig& cfg);

/// B = grad Phi (grad log p)^T + hess Phi.
Matrix hessian_estimate(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                        const EstimatorConfig& cfg);

Vector hessian_vector_product(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                              const EstimatorConfig& cfg, const Vector& u);

/// log p(tau, theta, rho_bar): start law, every action probability and every
/// transition including the one into `final_state`.
double trajectory_log_likelihood(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta,
                                 const Trajectory& tau, const Vector& rho_bar);

}  // namespace avgpg
