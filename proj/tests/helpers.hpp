#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "avgpg/mdp.hpp"
#include "avgpg/policy.hpp"

namespace testing {

using avgpg::Matrix;
using avgpg::Vector;

// Builds an MDP from an S x A reward and one S x S kernel per action.
inline avgpg::TabularMdp make_mdp(const Matrix& reward, const std::vector<Matrix>& kernels) {
  avgpg::TabularMdp m;
  m.n_states = static_cast<int>(reward.rows());
  m.n_actions = static_cast<int>(reward.cols());
  m.reward = reward;
  m.kernel = Matrix::Zero(m.n_states * m.n_actions, m.n_states);
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) m.kernel.row(m.row(s, a)) = kernels[static_cast<std::size_t>(a)].row(s);
  }
  m.init_dist = Vector::Constant(m.n_states, 1.0 / m.n_states);
  return m;
}

// Same kernel for every action.
inline avgpg::TabularMdp action_free_mdp(const Matrix& reward, const Matrix& kernel) {
  return make_mdp(reward, std::vector<Matrix>(static_cast<std::size_t>(reward.cols()), kernel));
}

inline avgpg::TabularMdp one_state_mdp(double r = 0.7) {
  return action_free_mdp(Matrix::Constant(1, 1, r), Matrix::Ones(1, 1));
}

inline Vector normal_vector(int d, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = nd(gen);
  return v;
}

// Even index: tabular; odd index: random linear features with d = 3.
inline avgpg::PolicySpec policy_for(int i, int S, int A, std::uint64_t seed) {
  return i % 2 == 0 ? avgpg::PolicySpec::tabular(S, A) : avgpg::PolicySpec::random_linear(S, A, 3, seed);
}

inline double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

}  // namespace testing
