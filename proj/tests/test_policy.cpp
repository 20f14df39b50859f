#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "helpers.hpp"

#include "avgpg/oracle.hpp"
#include "avgpg/policy.hpp"

using namespace avgpg;

namespace {

struct Instance {
  PolicySpec spec;
  PolicyParams theta;
  int s;
  int a;
};

Instance random_instance(int i, std::mt19937_64& gen) {
  const int S = 2 + i % 3, A = 2 + i % 3;
  PolicySpec spec = testing::policy_for(i, S, A, 40 + i);
  const PolicyParams theta{testing::normal_vector(spec.dim(), gen)};
  return {spec, theta, i % S, (i / 3) % A};
}

}  // namespace

TEST_CASE("zero parameters give the uniform distribution") {
  for (const PolicySpec& spec : {PolicySpec::tabular(3, 4), PolicySpec::random_linear(3, 4, 2, 1)}) {
    const Vector p = action_probs(spec, {Vector::Zero(spec.dim())}, 1);
    for (int a = 0; a < 4; ++a) CHECK(p(a) == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("logits (ln 3, 0) give (0.75, 0.25)") {
  const PolicySpec spec = PolicySpec::tabular(2, 2);
  Vector theta = Vector::Zero(4);
  theta(2) = std::log(3.0);
  const Vector p = action_probs(spec, {theta}, 1);
  CHECK(std::abs(p(0) - 0.75) <= 1e-15);
  CHECK(std::abs(p(1) - 0.25) <= 1e-15);
}

TEST_CASE("shifting all logits of a state leaves the distribution unchanged") {
  const PolicySpec spec = PolicySpec::tabular(2, 3);
  std::mt19937_64 gen(1);
  Vector theta = testing::normal_vector(6, gen);
  const Vector before = action_probs(spec, {theta}, 1);
  theta.segment(3, 3).array() += 7.5;
  const Vector after = action_probs(spec, {theta}, 1);
  CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("clamping keeps probabilities above zero") {
  PolicySpec spec = PolicySpec::tabular(1, 2);
  Vector theta(2);
  theta << 1000.0, -1000.0;
  const Vector p = action_probs(spec, {theta}, 0);
  CHECK(p(1) > 0.0);
  CHECK(p(1) == doctest::Approx(std::exp(-80.0)).epsilon(1e-12));
  CHECK(std::isfinite(log_prob(spec, {theta}, 0, 1)));
}

TEST_CASE("single action: zero score, zero Hessian, zero bounds") {
  const PolicySpec spec = PolicySpec::tabular(3, 1);
  const PolicyParams theta{Vector::Constant(3, 0.4)};
  for (int s = 0; s < 3; ++s) {
    CHECK(score(spec, theta, s, 0).norm() == 0.0);
    CHECK(score_hessian(spec, theta, s, 0).norm() == 0.0);
  }
  const ScoreBounds b = estimate_bounds(spec, {theta});
  CHECK(b.G == 0.0);
  CHECK(b.B == 0.0);
}

TEST_CASE("tabular score closed form") {
  const PolicySpec spec = PolicySpec::tabular(2, 3);
  std::mt19937_64 gen(2);
  const PolicyParams theta{testing::normal_vector(6, gen)};
  const Vector p = action_probs(spec, theta, 1);
  const Vector g = score(spec, theta, 1, 2);
  for (int j = 0; j < 3; ++j) CHECK(g(j) == 0.0);
  CHECK(g(3) == doctest::Approx(-p(0)));
  CHECK(g(4) == doctest::Approx(-p(1)));
  CHECK(g(5) == doctest::Approx(1.0 - p(2)));
}

TEST_CASE("property: normalization, score identity and second-derivative identity") {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 60; ++i) {
    const Instance in = random_instance(i, gen);
    const int A = in.spec.n_actions();
    const Vector p = action_probs(in.spec, in.theta, in.s);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-14);
    CHECK(p.minCoeff() > 0.0);
    Vector mean = Vector::Zero(in.spec.dim());
    Matrix second = Matrix::Zero(in.spec.dim(), in.spec.dim());
    for (int a = 0; a < A; ++a) {
      const Vector g = score(in.spec, in.theta, in.s, a);
      mean += p(a) * g;
      second += p(a) * (g * g.transpose() + score_hessian(in.spec, in.theta, in.s, a));
    }
    CHECK(mean.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(second.cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("property: score matches finite differences of log pi") {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 60; ++i) {
    const Instance in = random_instance(i, gen);
    const Vector fd = finite_difference_gradient(
        [&](const Vector& t) { return log_prob(in.spec, {t}, in.s, in.a); }, in.theta.theta, 1e-5);
    CHECK(testing::rel_err(score(in.spec, in.theta, in.s, in.a), fd) <= 1e-6);
  }
}

TEST_CASE("property: score Hessian is symmetric NSD and matches finite differences") {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 60; ++i) {
    const Instance in = random_instance(i, gen);
    const Matrix h = score_hessian(in.spec, in.theta, in.s, in.a);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()));
    CHECK(eig.eigenvalues().maxCoeff() <= 1e-10);
    const Matrix fd = finite_difference(
        [&](const Vector& t) { return score(in.spec, {t}, in.s, in.a); }, in.theta.theta, 1e-4);
    CHECK((fd - h).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("property: tabular bounds and monotone sampling") {
  std::mt19937_64 gen(6);
  std::vector<PolicyParams> samples;
  const PolicySpec spec = PolicySpec::tabular(3, 3);
  double prev_G = 0.0, prev_B = 0.0;
  for (int i = 0; i < 50; ++i) {
    samples.push_back({testing::normal_vector(9, gen, 2.0)});
    const ScoreBounds b = estimate_bounds(spec, samples);
    CHECK(b.G <= std::sqrt(2.0) + 1e-9);
    CHECK(b.B <= 2.0 + 1e-9);
    CHECK(b.G >= prev_G);
    CHECK(b.B >= prev_B);
    prev_G = b.G;
    prev_B = b.B;
  }
}

TEST_CASE("linear features and json round trip") {
  const PolicySpec spec = PolicySpec::random_linear(3, 2, 4, 9);
  CHECK(spec.dim() == 4);
  CHECK(spec.features().rows() == 6);
  const PolicySpec back = policy_from_json(policy_to_json(spec), 3, 2);
  CHECK(back.kind() == PolicyKind::LinearSoftmax);
  CHECK(back.features() == spec.features());
  const PolicySpec again = PolicySpec::random_linear(3, 2, 4, 9);
  CHECK(again.features() == spec.features());
}
