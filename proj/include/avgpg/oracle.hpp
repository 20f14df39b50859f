#pragma once

// Exact ground truth on tabular MDPs. Everything here is computed by dense
// linear algebra from the known model and is the reference that the
// trajectory-based estimators are checked against.

#include <functional>
#include <vector>

#include "avgpg/mdp.hpp"
#include "avgpg/policy.hpp"

namespace avgpg {

struct AverageRewardSolution {
  double gain = 0.0;  // J
  Vector v;           // bias values, normalized so that sum_s d(s) v(s) = 0
  Matrix q;           // S x A
  Matrix adv;         // q - v
  Vector stationary;  // d^pi
};

/// Gain and bias values of an arbitrary stationary policy table.
AverageRewardSolution evaluate_policy(const TabularMdp& m, const PolicyTable& probs);

AverageRewardSolution solve_average_reward(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta);

double exact_gain(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta);

Vector exact_gradient(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta);

struct FisherInfo {
  Matrix matrix;
  double min_eig = 0.0;
  /// Smallest eigenvalue above 1e-8 * largest; 0 if F vanishes.
  double min_positive_eig = 0.0;
  Vector npg_direction;
  double ridge = 0.0;
};

FisherInfo fisher_and_npg(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta,
                          double ridge = 1e-10);

/// E_{s~d^{pi*}, a~pi*}[(score . omega - A^{pi_theta}(s,a))^2] with omega the
/// NPG direction at theta.
double transferred_error(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta,
                         const PolicyTable& optimal, double ridge = 1e-10);

struct OptimalPolicy {
  double gain = 0.0;
  std::vector<int> actions;  // deterministic pi*
  int iterations = 0;

  PolicyTable table(int n_actions) const;
};

/// Howard policy iteration over deterministic policies.
OptimalPolicy optimal_gain(const TabularMdp& m, int max_iterations = 10000);

/// Gain of every deterministic policy, maximized; A^S evaluations.
double brute_force_optimal_gain(const TabularMdp& m);

using VectorFunction = std::function<Vector(const Vector&)>;

/// Central differences, one column per coordinate: m x d.
Matrix finite_difference(const VectorFunction& f, const Vector& theta, double h = 1e-5);

/// Scalar convenience wrapper returning the gradient.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& theta,
                                  double h = 1e-5);

}  // namespace avgpg
