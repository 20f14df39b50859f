#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "helpers.hpp"

#include "avgpg/error.hpp"
#include "avgpg/oracle.hpp"

using namespace avgpg;

TEST_CASE("constant reward: gain c, zero bias and advantage") {
  const TabularMdp m = random_ergodic_mdp(4, 3, 0.2, 1);
  TabularMdp c = m;
  c.reward.setConstant(0.35);
  std::mt19937_64 gen(1);
  const PolicySpec spec = PolicySpec::tabular(4, 3);
  const PolicyParams theta{testing::normal_vector(12, gen)};
  const AverageRewardSolution sol = solve_average_reward(c, spec, theta);
  CHECK(sol.gain == doctest::Approx(0.35).epsilon(1e-14));
  CHECK(sol.v.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(sol.adv.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(exact_gradient(c, spec, theta).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("one state: gain 0.7") {
  const TabularMdp m = testing::one_state_mdp();
  CHECK(exact_gain(m, PolicySpec::tabular(1, 1), {Vector::Zero(1)}) == doctest::Approx(0.7));
  const OptimalPolicy opt = optimal_gain(m);
  CHECK(opt.gain == doctest::Approx(0.7));
  CHECK(opt.actions == std::vector<int>{0});
}

TEST_CASE("property: Poisson equation and value bounds") {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 50; ++i) {
    const int S = 2 + i % 4, A = 2 + i % 2;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.1, 300 + i);
    const PolicySpec spec = testing::policy_for(i, S, A, 700 + i);
    const PolicyParams theta{testing::normal_vector(spec.dim(), gen)};
    const AverageRewardSolution sol = solve_average_reward(m, spec, theta);
    const PolicyTable p = policy_table(spec, theta);
    const ChainDiagnostics c = induced_chain(m, p);
    const Vector r_pi = (m.reward.cwiseProduct(p)).rowwise().sum();
    const Vector residual = sol.v - c.induced_kernel * sol.v - (r_pi.array() - sol.gain).matrix();
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(std::abs(c.stationary.dot(sol.v)) <= 1e-12);
    CHECK(sol.gain == doctest::Approx(c.stationary.dot(r_pi)).epsilon(1e-12));
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double q = m.reward(s, a) - sol.gain + m.kernel.row(m.row(s, a)).dot(sol.v);
        CHECK(sol.q(s, a) == doctest::Approx(q).epsilon(1e-12));
        CHECK(sol.adv(s, a) == doctest::Approx(q - sol.v(s)).epsilon(1e-12));
      }
    }
    CHECK(sol.v.cwiseAbs().maxCoeff() <= 5.0 * c.t_mix);
    CHECK(sol.q.cwiseAbs().maxCoeff() <= 6.0 * c.t_mix);
  }
}

TEST_CASE("gain agrees with a long rollout") {
  const TabularMdp m = random_ergodic_mdp(4, 2, 0.1, 41);
  const PolicySpec spec = PolicySpec::tabular(4, 2);
  std::mt19937_64 gen(3);
  const PolicyParams theta{testing::normal_vector(8, gen)};
  Simulator sim(m, 0, 5);
  const Trajectory tau = sim.rollout(policy_table(spec, theta), 1000000);
  double total = 0.0;
  for (const Step& s : tau.steps) total += s.reward;
  CHECK(std::abs(total / tau.size() - exact_gain(m, spec, theta)) <= 3e-3);
}

TEST_CASE("exact gradient: zero for a single action") {
  const TabularMdp m = random_ergodic_mdp(3, 1, 0.1, 4);
  CHECK(exact_gradient(m, PolicySpec::tabular(3, 1), {Vector::Constant(3, 0.2)}).norm() == 0.0);
}

TEST_CASE("property: exact gradient matches finite differences of the gain") {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 50; ++i) {
    const int S = 2 + i % 3, A = 2 + i % 2;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.1, 1100 + i);
    const PolicySpec spec = testing::policy_for(i, S, A, 1200 + i);
    const Vector theta = testing::normal_vector(spec.dim(), gen);
    const Vector fd = finite_difference_gradient([&](const Vector& t) { return exact_gain(m, spec, {t}); }, theta);
    CHECK(testing::rel_err(exact_gradient(m, spec, {theta}), fd) <= 1e-5);
  }
}

TEST_CASE("property: performance difference identity") {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 20; ++i) {
    const TabularMdp m = random_ergodic_mdp(3 + i % 2, 3, 0.1, 1400 + i);
    const PolicySpec spec = PolicySpec::tabular(m.n_states, 3);
    const PolicyParams a{testing::normal_vector(spec.dim(), gen)}, b{testing::normal_vector(spec.dim(), gen)};
    const AverageRewardSolution sa = solve_average_reward(m, spec, a);
    const AverageRewardSolution sb = solve_average_reward(m, spec, b);
    const PolicyTable pa = policy_table(spec, a);
    double rhs = 0.0;
    for (int s = 0; s < m.n_states; ++s) rhs += sa.stationary(s) * pa.row(s).dot(sb.adv.row(s));
    CHECK(std::abs(sa.gain - sb.gain - rhs) <= 1e-9);
  }
}

TEST_CASE("fisher: single action, PSD, pinned 2x2 uniform values") {
  const TabularMdp single = random_ergodic_mdp(2, 1, 0.1, 6);
  const FisherInfo f1 = fisher_and_npg(single, PolicySpec::tabular(2, 1), {Vector::Zero(2)});
  CHECK(f1.matrix.norm() == 0.0);
  CHECK(f1.min_eig == 0.0);
  CHECK(f1.npg_direction.norm() == 0.0);

  // d = (1/2, 1/2), pi = 1/2: each state block is (1/8) [[1, -1], [-1, 1]].
  const TabularMdp u = testing::action_free_mdp(Matrix::Constant(2, 2, 0.5), Matrix::Constant(2, 2, 0.5));
  const FisherInfo f = fisher_and_npg(u, PolicySpec::tabular(2, 2), {Vector::Zero(4)});
  Matrix expected = Matrix::Zero(4, 4);
  expected.block(0, 0, 2, 2) << 0.125, -0.125, -0.125, 0.125;
  expected.block(2, 2, 2, 2) << 0.125, -0.125, -0.125, 0.125;
  CHECK((f.matrix - expected).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(f.min_positive_eig == doctest::Approx(0.25));

  std::mt19937_64 gen(6);
  const TabularMdp m = random_ergodic_mdp(3, 3, 0.1, 7);
  const PolicySpec spec = PolicySpec::tabular(3, 3);
  const FisherInfo fr = fisher_and_npg(m, spec, {testing::normal_vector(9, gen)});
  for (int i = 0; i < 100; ++i) {
    const Vector x = testing::normal_vector(9, gen);
    CHECK(x.dot(fr.matrix * x) >= -1e-10);
  }
}

TEST_CASE("transferred error") {
  const TabularMdp one = testing::one_state_mdp();
  const OptimalPolicy o1 = optimal_gain(one);
  CHECK(transferred_error(one, PolicySpec::tabular(1, 1), {Vector::Zero(1)}, o1.table(1)) == doctest::Approx(0.0));

  std::mt19937_64 gen(7);
  for (int i = 0; i < 10; ++i) {
    const TabularMdp m = random_ergodic_mdp(3, 2, 0.1, 1500 + i);
    const PolicySpec spec = PolicySpec::tabular(3, 2);
    const double e = transferred_error(m, spec, {testing::normal_vector(6, gen)}, optimal_gain(m).table(2));
    CHECK(e <= 1e-6);
  }
  const TabularMdp m4 = random_ergodic_mdp(4, 3, 0.1, 8);
  const PolicySpec lin = PolicySpec::random_linear(4, 3, 2, 8);
  const double e = transferred_error(m4, lin, {testing::normal_vector(2, gen)}, optimal_gain(m4).table(3));
  MESSAGE("linear d=2 transferred error: " << e);
  CHECK(e > 0.0);
}

TEST_CASE("optimal gain: dominant action and brute force agreement") {
  Matrix r(3, 2);
  r << 0, 1, 0, 1, 0, 1;
  const TabularMdp dom = testing::action_free_mdp(r, random_ergodic_mdp(3, 1, 0.3, 9).kernel);
  const OptimalPolicy od = optimal_gain(dom);
  CHECK(od.gain == doctest::Approx(1.0));
  CHECK(od.actions == std::vector<int>{1, 1, 1});

  for (int i = 0; i < 50; ++i) {
    const TabularMdp m = random_ergodic_mdp(4, 3, 0.05 + 0.01 * (i % 5), 1600 + i);
    CHECK(optimal_gain(m).gain == doctest::Approx(brute_force_optimal_gain(m)).epsilon(1e-12));
  }
}

TEST_CASE("finite differences: linear, quadratic, h-robustness, non-finite") {
  std::mt19937_64 gen(8);
  const Matrix Amat = Matrix::Random(3, 5);
  const Vector x = testing::normal_vector(5, gen);
  for (double h : {1e-1, 1e-3, 1e-6}) {
    const Matrix J = finite_difference([&](const Vector& t) { return Vector(Amat * t); }, x, h);
    CHECK((J - Amat).cwiseAbs().maxCoeff() <= 1e-9);
  }
  const Vector g = finite_difference_gradient([](const Vector& t) { return 0.5 * t.squaredNorm(); }, x, 1e-3);
  CHECK((g - x).cwiseAbs().maxCoeff() <= 1e-9);

  const TabularMdp m = random_ergodic_mdp(3, 2, 0.1, 10);
  const PolicySpec spec = PolicySpec::tabular(3, 2);
  const Vector theta = testing::normal_vector(6, gen);
  auto gain = [&](const Vector& t) { return exact_gain(m, spec, {t}); };
  const Vector g4 = finite_difference_gradient(gain, theta, 1e-4);
  const Vector g5 = finite_difference_gradient(gain, theta, 1e-5);
  CHECK((g4 - g5).cwiseAbs().maxCoeff() <= 1e-6);

  bool threw = false;
  try {
    finite_difference_gradient([](const Vector&) { return std::numeric_limits<double>::quiet_NaN(); }, x);
  } catch (const Error& e) {
    threw = e.kind() == ErrorKind::NonFiniteEvaluation;
  }
  CHECK(threw);
}
