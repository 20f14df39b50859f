#include "avgpg/oracle.hpp"

#include <cmath>

#include "avgpg/error.hpp"

namespace avgpg {

AverageRewardSolution evaluate_policy(const TabularMdp& m, const PolicyTable& probs) {
  const int S = m.n_states;
  const Matrix chain = induced_kernel(m, probs);
  AverageRewardSolution sol;
  sol.stationary = stationary_distribution(chain);
  const Vector r_pi = (m.reward.array() * probs.array()).rowwise().sum();
  sol.gain = sol.stationary.dot(r_pi);

  // (I - P + 1 d^T) v = r_pi - J 1 forces d^T v = 0 and is nonsingular for
  // an ergodic chain.
  Matrix system = Matrix::Identity(S, S) - chain + Vector::Ones(S) * sol.stationary.transpose();
  const Vector rhs = r_pi.array() - sol.gain;
  Eigen::FullPivLU<Matrix> lu(system);
  if (lu.rank() < S) throw Error(ErrorKind::SingularStationarySolve, "Poisson system is singular");
  sol.v = lu.solve(rhs);

  sol.q.resize(S, m.n_actions);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      sol.q(s, a) = m.reward(s, a) - sol.gain + m.kernel.row(m.row(s, a)).dot(sol.v);
    }
  }
  sol.adv = sol.q.colwise() - sol.v;
  return sol;
}

AverageRewardSolution solve_average_reward(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta) {
  return evaluate_policy(m, policy_table(spec, theta));
}

double exact_gain(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta) {
  const PolicyTable probs = policy_table(spec, theta);
  const Vector d = stationary_distribution(induced_kernel(m, probs));
  return d.dot((m.reward.array() * probs.array()).rowwise().sum().matrix());
}

Vector exact_gradient(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta) {
  const auto sol = solve_average_reward(m, spec, theta);
  const PolicyTable probs = policy_table(spec, theta);
  Vector grad = Vector::Zero(spec.dim());
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      grad += sol.stationary(s) * probs(s, a) * sol.adv(s, a) * score(spec, theta, s, a);
    }
  }
  return grad;
}

FisherInfo fisher_and_npg(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta, double ridge) {
  const auto sol = solve_average_reward(m, spec, theta);
  const PolicyTable probs = policy_table(spec, theta);
  const int d = spec.dim();
  FisherInfo info;
  info.ridge = ridge;
  info.matrix = Matrix::Zero(d, d);
  Vector grad = Vector::Zero(d);
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      const Vector sc = score(spec, theta, s, a);
      const double w = sol.stationary(s) * probs(s, a);
      info.matrix.noalias() += w * sc * sc.transpose();
      grad += w * sol.adv(s, a) * sc;
    }
  }
  info.matrix = 0.5 * (info.matrix + info.matrix.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(info.matrix, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  info.min_eig = ev.minCoeff();
  const double cutoff = 1e-8 * std::max(ev.maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff && ev(i) > 0.0) {
      info.min_positive_eig = ev(i);
      break;
    }
  }
  const Matrix regularized = info.matrix + ridge * Matrix::Identity(d, d);
  info.npg_direction = regularized.ldlt().solve(grad);
  if (!info.npg_direction.allFinite()) info.npg_direction = Vector::Zero(d);
  return info;
}

double transferred_error(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta,
                         const PolicyTable& optimal, double ridge) {
  const auto sol = solve_average_reward(m, spec, theta);
  const Vector omega = fisher_and_npg(m, spec, theta, ridge).npg_direction;
  const Vector d_star = stationary_distribution(induced_kernel(m, optimal));
  double err = 0.0;
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      if (optimal(s, a) == 0.0) continue;
      const double resid = score(spec, theta, s, a).dot(omega) - sol.adv(s, a);
      err += d_star(s) * optimal(s, a) * resid * resid;
    }
  }
  return err;
}

PolicyTable OptimalPolicy::table(int n_actions) const {
  PolicyTable t = PolicyTable::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) t(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  return t;
}

OptimalPolicy optimal_gain(const TabularMdp& m, int max_iterations) {
  constexpr double kImproveTol = 1e-10;
  OptimalPolicy out;
  out.actions.assign(static_cast<std::size_t>(m.n_states), 0);
  for (int it = 1; it <= max_iterations; ++it) {
    const auto sol = evaluate_policy(m, out.table(m.n_actions));
    bool changed = false;
    for (int s = 0; s < m.n_states; ++s) {
      int& incumbent = out.actions[static_cast<std::size_t>(s)];
      int best = incumbent;
      for (int a = 0; a < m.n_actions; ++a) {
        if (sol.q(s, a) > sol.q(s, best) + kImproveTol) best = a;
      }
      if (best != incumbent) {
        incumbent = best;
        changed = true;
      }
    }
    if (!changed) {
      out.gain = sol.gain;
      out.iterations = it;
      return out;
    }
  }
  throw Error(ErrorKind::NoImprovementCycle, "policy iteration did not converge");
}

double brute_force_optimal_gain(const TabularMdp& m) {
  std::vector<int> actions(static_cast<std::size_t>(m.n_states), 0);
  double best = -1.0;
  while (true) {
    PolicyTable t = PolicyTable::Zero(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) t(s, actions[static_cast<std::size_t>(s)]) = 1.0;
    best = std::max(best, evaluate_policy(m, t).gain);
    int s = 0;
    while (s < m.n_states && ++actions[static_cast<std::size_t>(s)] == m.n_actions) {
      actions[static_cast<std::size_t>(s)] = 0;
      ++s;
    }
    if (s == m.n_states) break;
  }
  return best;
}

Matrix finite_difference(const VectorFunction& f, const Vector& theta, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be positive");
  Matrix jac;
  Vector plus = theta;
  Vector minus = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    plus(i) = theta(i) + h;
    minus(i) = theta(i) - h;
    const Vector fp = f(plus);
    const Vector fm = f(minus);
    if (!fp.allFinite() || !fm.allFinite()) {
      throw Error(ErrorKind::NonFiniteEvaluation, "non-finite value at coordinate " + std::to_string(i));
    }
    if (jac.size() == 0) jac.resize(fp.size(), theta.size());
    jac.col(i) = (fp - fm) / (2.0 * h);
    plus(i) = theta(i);
    minus(i) = theta(i);
  }
  return jac;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& theta, double h) {
  const Matrix jac = finite_difference([&](const Vector& x) { return Vector::Constant(1, f(x)); }, theta, h);
  return jac.row(0).transpose();
}

}  // namespace avgpg
