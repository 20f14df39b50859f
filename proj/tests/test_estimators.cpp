#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "avgpg/checks.hpp"
#include "avgpg/error.hpp"
#include "avgpg/estimators.hpp"
#include "avgpg/oracle.hpp"

using namespace avgpg;

namespace {

Trajectory from_states(const std::vector<int>& states, const std::vector<int>& actions, const TabularMdp& m) {
  Trajectory tau;
  for (std::size_t t = 0; t < states.size(); ++t) {
    tau.steps.push_back({states[t], actions[t], m.reward(states[t], actions[t])});
  }
  tau.final_state = states.back();
  return tau;
}

Trajectory one_state_trajectory(double r, int len) {
  const TabularMdp m = testing::one_state_mdp(r);
  return from_states(std::vector<int>(static_cast<std::size_t>(len), 0), std::vector<int>(static_cast<std::size_t>(len), 0), m);
}

bool bit_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a(i), &b(i), sizeof(double)) != 0) return false;
  }
  return true;
}

struct Instance {
  TabularMdp m;
  PolicySpec spec;
  PolicyParams theta;
  Trajectory tau;
  EstimatorConfig cfg;
};

Instance random_instance(int i, std::mt19937_64& gen) {
  const int S = 2 + i % 3, A = 2 + i % 2;
  TabularMdp m = random_ergodic_mdp(S, A, 0.2, 2000 + i);
  PolicySpec spec = testing::policy_for(i, S, A, 2100 + i);
  PolicyParams theta{testing::normal_vector(spec.dim(), gen, 0.7)};
  Rng rng(2200 + i);
  Trajectory tau = sample_trajectory(m, policy_table(spec, theta), i % S, 60 + i % 7, 0, rng);
  return {m, spec, theta, tau, EstimatorConfig{3 + i % 3, 64, 0.0}};
}

// Exact expectations of g and B over every trajectory of length L from rho.
struct Expectation {
  Vector g;
  Matrix B;
};

Expectation enumerate(const TabularMdp& m, const PolicySpec& spec, const Vector& theta, const Vector& rho, int L,
                      const EstimatorConfig& cfg) {
  const PolicyTable p = policy_table(spec, {theta});
  const int S = m.n_states, A = m.n_actions;
  long total = 1;
  for (int i = 0; i < L; ++i) total *= S * A;
  Expectation out{Vector::Zero(spec.dim()), Matrix::Zero(spec.dim(), spec.dim())};
  for (int s0 = 0; s0 < S; ++s0) {
    for (long code = 0; code < total; ++code) {
      Trajectory tau;
      long c = code;
      double prob = rho(s0);
      int s = s0;
      for (int t = 0; t < L; ++t) {
        const int a = static_cast<int>(c % A);
        c /= A;
        const int next = static_cast<int>(c % S);
        c /= S;
        prob *= p(s, a) * m.transition(s, a, next);
        tau.steps.push_back({s, a, m.reward(s, a)});
        s = next;
      }
      tau.final_state = s;
      out.g += prob * grad_estimate(spec, {theta}, tau, cfg);
      out.B += prob * hessian_estimate(spec, {theta}, tau, cfg);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("scan hand trace: r = 1, |tau| = 5N") {
  const int N = 4;
  const Trajectory tau = one_state_trajectory(1.0, 5 * N);
  const ValueEstimates e = value_q_estimates(tau, 0, 0, Vector::Ones(1), {N, 64, 0.0});
  CHECK(e.visits == 2);
  CHECK(e.visit_starts == std::vector<std::int64_t>{0, 2 * N});
  CHECK(e.visit_sums == std::vector<double>{N, N});
  CHECK(e.v_hat == N);
  CHECK(e.q_hat == N);
  CHECK(e.advantage() == 0.0);
}

TEST_CASE("scan hand trace: r = 0") {
  const Trajectory tau = one_state_trajectory(0.0, 15);
  const ValueEstimates e = value_q_estimates(tau, 0, 0, Vector::Ones(1), {3, 64, 0.0});
  CHECK(e.visits == 2);
  CHECK(e.v_hat == 0.0);
  CHECK(e.q_hat == 0.0);
}

TEST_CASE("scan: unvisited state gives zeros, too-short trajectory is an error") {
  const TabularMdp m = random_ergodic_mdp(3, 2, 0.1, 1);
  const Trajectory tau = from_states({0, 1, 0, 1, 0, 1, 0, 1}, {0, 1, 0, 1, 0, 1, 0, 1}, m);
  const ValueEstimates e = value_q_estimates(tau, 2, 0, Vector::Constant(2, 0.5), {2, 64, 0.0});
  CHECK(e.visits == 0);
  CHECK(e.v_hat == 0.0);
  CHECK(e.q_hat == 0.0);

  const PolicySpec spec = PolicySpec::tabular(3, 2);
  bool threw = false;
  try {
    grad_estimate(spec, {Vector::Zero(6)}, tau, {8, 64, 0.0});
  } catch (const Error& err) {
    threw = err.kind() == ErrorKind::TrajectoryTooShort;
  }
  CHECK(threw);
}

TEST_CASE("scan: probability floor") {
  const TabularMdp m = random_ergodic_mdp(2, 2, 0.1, 2);
  const Trajectory tau = from_states({0, 0, 1, 0, 1, 1}, {0, 1, 0, 0, 1, 0}, m);
  Vector probs(2);
  probs << 1.0 - 1e-20, 1e-20;
  bool threw = false;
  try {
    value_q_estimates(tau, 0, 1, probs, {1, 64, 1e-12});
  } catch (const Error& err) {
    threw = err.kind() == ErrorKind::ProbabilityUnderflow;
  }
  CHECK(threw);
  CHECK_NOTHROW(value_q_estimates(tau, 0, 1, probs, {1, 64, 0.0}));
}

TEST_CASE("single action class: zero g, Phi is the mean of Psi2") {
  const TabularMdp m = random_ergodic_mdp(3, 1, 0.1, 3);
  const PolicySpec spec = PolicySpec::tabular(3, 1);
  Rng rng(3);
  const Trajectory tau = sample_trajectory(m, policy_table(spec, {Vector::Zero(3)}), 0, 40, 0, rng);
  const EstimatorConfig cfg{3, 64, 0.0};
  CHECK(grad_estimate(spec, {Vector::Zero(3)}, tau, cfg).norm() == 0.0);
  const PhiReport r = phi_report(spec, {Vector::Zero(3)}, tau, cfg);
  double mean = 0.0;
  for (double x : r.psi2) mean += x;
  mean /= static_cast<double>(r.psi2.size());
  CHECK(r.phi == doctest::Approx(mean).epsilon(1e-14));
  CHECK(r.grad.norm() == 0.0);
  CHECK(r.hess.norm() == 0.0);
  CHECK(r.logp_score.norm() == 0.0);
  CHECK(hessian_estimate(spec, {Vector::Zero(3)}, tau, cfg).norm() == 0.0);
}

TEST_CASE("|tau| = N + 1 gives a single-term average") {
  const TabularMdp m = random_ergodic_mdp(2, 2, 0.3, 4);
  const PolicySpec spec = PolicySpec::tabular(2, 2);
  std::mt19937_64 gen(4);
  const PolicyParams theta{testing::normal_vector(4, gen)};
  const EstimatorConfig cfg{3, 64, 0.0};
  const Trajectory tau = from_states({0, 1, 0, 0}, {1, 0, 1, 1}, m);
  const Step& last = tau.steps.back();
  const ValueEstimates e =
      value_q_estimates(tau, last.state, last.action, action_probs(spec, theta, last.state), cfg);
  const Vector expected = e.advantage() * score(spec, theta, last.state, last.action);
  CHECK((grad_estimate(spec, theta, tau, cfg) - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("no visits anywhere: every estimator returns finite zeros") {
  const TabularMdp m = random_ergodic_mdp(2, 2, 0.3, 5);
  const PolicySpec spec = PolicySpec::tabular(2, 2);
  // Only state 0 starts a window; every post-burn-in step is in state 1.
  const Trajectory tau = from_states({0, 0, 1, 1, 1}, {0, 1, 0, 1, 0}, m);
  const EstimatorConfig cfg{3, 64, 0.0};
  const PolicyParams theta{Vector::Constant(4, 0.3)};
  const Vector g = grad_estimate(spec, theta, tau, cfg);
  CHECK(g.allFinite());
  CHECK(g.norm() == 0.0);
  const Matrix B = hessian_estimate(spec, theta, tau, cfg);
  CHECK(B.allFinite());
  CHECK(B.norm() == 0.0);
  const EstimatorStats st = estimator_stats(tau, 2, 2, cfg);
  CHECK(st.zero_visit_fraction == 1.0);
}

TEST_CASE("property: grad Phi equals g bit for bit, Psi frozen") {
  std::mt19937_64 gen(6);
  for (int i = 0; i < 60; ++i) {
    const Instance in = random_instance(i, gen);
    const PhiFunctional phi(in.tau, in.m.n_states, in.m.n_actions, in.cfg);
    CHECK(bit_equal(phi.gradient(in.spec, in.theta), grad_estimate(in.spec, in.theta, in.tau, in.cfg)));

    const PhiReport at = phi_report(in.spec, in.theta, in.tau, in.cfg);
    const PolicyParams moved{in.theta.theta + testing::normal_vector(in.spec.dim(), gen, 0.3)};
    const PhiReport elsewhere = phi.evaluate(in.spec, moved);
    CHECK(at.psi1 == elsewhere.psi1);
    CHECK(at.psi2 == elsewhere.psi2);

    // Psi from raw data: -V_hat(s_t) and -sum_j y_j 1(a) / i.
    const VisitTable visits(in.tau, in.m.n_states, in.m.n_actions, in.cfg.N);
    for (std::size_t k = 0; k < at.psi1.size(); ++k) {
      const Step& st = in.tau.steps[k + static_cast<std::size_t>(in.cfg.N)];
      CHECK(at.psi1[k] == -visits.mean_sum(st.state));
      CHECK(at.psi2[k] == -visits.mean_sum_with_action(st.state, st.action));
    }
  }
}

TEST_CASE("property: Phi gradient and Hessian match finite differences") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 60; ++i) {
    const Instance in = random_instance(i, gen);
    const PhiFunctional phi(in.tau, in.m.n_states, in.m.n_actions, in.cfg);
    const Vector fd_grad = finite_difference_gradient(
        [&](const Vector& t) { return phi.value(in.spec, {t}); }, in.theta.theta, 1e-6);
    const Vector grad = phi.gradient(in.spec, in.theta);
    if (grad.norm() > 1e-8) CHECK(testing::rel_err(grad, fd_grad) <= 1e-6);
    const Matrix fd_hess = finite_difference(
        [&](const Vector& t) { return phi.gradient(in.spec, {t}); }, in.theta.theta, 1e-5);
    const Matrix hess = phi.hessian(in.spec, in.theta);
    CHECK((hess - fd_hess).cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + hess.cwiseAbs().maxCoeff()));
    const Vector fd_logp = finite_difference_gradient(
        [&](const Vector& t) {
          return trajectory_log_likelihood(in.m, in.spec, {t}, in.tau, in.m.init_dist);
        },
        in.theta.theta, 1e-6);
    CHECK(testing::rel_err(phi.logp_score(in.spec, in.theta), fd_logp) <= 1e-6);
  }
}

TEST_CASE("corrupted Phi Hessian is caught by the finite-difference check") {
  CHECK(check_phi_identities().passed);
  CheckOptions corrupt;
  corrupt.hessian_mutation = [](const Matrix& h) {
    Matrix out = h;
    out(0, 0) += 1e-3 * (1.0 + h.cwiseAbs().maxCoeff());
    return out;
  };
  CHECK_FALSE(check_phi_identities(corrupt).passed);
}

TEST_CASE("property: Hessian-vector product matches the materialized B") {
  std::mt19937_64 gen(8);
  for (int i = 0; i < 60; ++i) {
    const Instance in = random_instance(i, gen);
    const Matrix B = hessian_estimate(in.spec, in.theta, in.tau, in.cfg);
    CHECK(B.allFinite());
    const Vector zero = hessian_vector_product(in.spec, in.theta, in.tau, in.cfg, Vector::Zero(in.spec.dim()));
    CHECK(zero.norm() == 0.0);
    for (int j = 0; j < in.spec.dim(); ++j) {
      const Vector col =
          hessian_vector_product(in.spec, in.theta, in.tau, in.cfg, Vector::Unit(in.spec.dim(), j));
      CHECK((col - B.col(j)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + B.cwiseAbs().maxCoeff()));
    }
    const Vector u = testing::normal_vector(in.spec.dim(), gen);
    const Vector bu = hessian_vector_product(in.spec, in.theta, in.tau, in.cfg, u);
    CHECK((bu - B * u).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + (B * u).cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("exact enumeration: E[B] is the Jacobian of E[g]") {
  const TabularMdp m = random_ergodic_mdp(2, 2, 0.3, 51);
  const PolicySpec spec = PolicySpec::tabular(2, 2);
  Vector theta(4);
  theta << 0.3, -0.2, 0.5, 0.1;
  const Vector rho = induced_chain(m, policy_table(spec, {theta})).stationary;
  const EstimatorConfig cfg{2, 64, 0.0};
  for (int L : {4, 5}) {
    const Expectation e = enumerate(m, spec, theta, rho, L, cfg);
    const Matrix fd = finite_difference(
        [&](const Vector& t) { return enumerate(m, spec, t, rho, L, cfg).g; }, theta, 1e-5);
    CHECK((e.B - fd).cwiseAbs().maxCoeff() <= 1e-8);
  }
}
