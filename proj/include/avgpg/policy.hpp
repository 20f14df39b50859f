#pragma once

// Softmax policy classes. Both classes are written through the per-state
// logit Jacobian J_s (A x d, row a = d z(s,a) / d theta), which gives
//   score(s,a)        = J_s^T (e_a - pi_s)
//   score_hessian(s)  = -J_s^T (diag(pi_s) - pi_s pi_s^T) J_s
// The score Hessian does not depend on the chosen action.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "avgpg/mdp.hpp"

namespace avgpg {

enum class PolicyKind { TabularSoftmax, LinearSoftmax };

struct PolicyParams {
  Vector theta;

  int dim() const { return static_cast<int>(theta.size()); }
};

class PolicySpec {
 public:
  /// Logits z(s,a) = theta[s*A + a], d = S*A.
  static PolicySpec tabular(int n_states, int n_actions);

  /// Logits z(s,a) = theta . phi(s,a); `features` is (S*A) x d.
  static PolicySpec linear(int n_states, int n_actions, Matrix features);

  /// Linear class with i.i.d. standard normal features.
  static PolicySpec random_linear(int n_states, int n_actions, int dim, std::uint64_t seed);

  PolicyKind kind() const { return kind_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int dim() const { return dim_; }
  const Matrix& features() const { return features_; }
  double feature_bound() const { return feature_bound_; }

  /// Logits are clamped to [-logit_clamp, logit_clamp] when clamping is on.
  bool clamp_logits = true;
  double logit_clamp = 40.0;

  /// J_s, A x d.
  Matrix logit_jacobian(int s) const;

  Vector logits(const PolicyParams& theta, int s) const;

 private:
  PolicySpec() = default;

  PolicyKind kind_ = PolicyKind::TabularSoftmax;
  int n_states_ = 0;
  int n_actions_ = 0;
  int dim_ = 0;
  Matrix features_;
  double feature_bound_ = 0.0;
};

Vector action_probs(const PolicySpec& spec, const PolicyParams& theta, int s);

/// All states at once, S x A.
PolicyTable policy_table(const PolicySpec& spec, const PolicyParams& theta);

double log_prob(const PolicySpec& spec, const PolicyParams& theta, int s, int a);

Vector score(const PolicySpec& spec, const PolicyParams& theta, int s, int a);

Matrix score_hessian(const PolicySpec& spec, const PolicyParams& theta, int s, int a);

struct ScoreBounds {
  double G = 0.0;
  double B = 0.0;
};

/// Max score norm and max score-Hessian spectral norm over samples x (s,a).
ScoreBounds estimate_bounds(const PolicySpec& spec, const std::vector<PolicyParams>& theta_samples);

nlohmann::json policy_to_json(const PolicySpec& spec, const PolicyParams* theta = nullptr);
PolicySpec policy_from_json(const nlohmann::json& j, int n_states, int n_actions);

}  // namespace avgpg
