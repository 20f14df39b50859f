#include "avgpg/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>

#include <Eigen/Eigenvalues>

#include "avgpg/algorithms.hpp"
#include "avgpg/estimators.hpp"
#include "avgpg/harness.hpp"
#include "avgpg/oracle.hpp"
#include "avgpg/policy.hpp"

namespace avgpg {

namespace {

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

CheckResult finish(std::string name, bool passed, std::string detail, const Stopwatch& sw) {
  return {std::move(name), passed, std::move(detail), sw.seconds()};
}

Vector random_normal(int d, Rng& rng) {
  Vector x(d);
  for (int i = 0; i < d; ++i) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    x(i) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  return x;
}

int draw(const Vector& dist, Rng& rng) {
  std::vector<double> cdf(static_cast<std::size_t>(dist.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) cdf[static_cast<std::size_t>(i)] = (acc += dist(i));
  return rng.from_cdf(cdf);
}

double rel_err(const Vector& x, const Vector& ref) {
  return (x - ref).norm() / std::max(ref.norm(), std::numeric_limits<double>::min());
}

double rel_err(const Matrix& x, const Matrix& ref) {
  return (x - ref).norm() / std::max(ref.norm(), std::numeric_limits<double>::min());
}

bool bit_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return false;
  }
  return true;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double spectral_norm(const Matrix& sym) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Running mean and standard error of vector samples.
class Moments {
 public:
  explicit Moments(Eigen::Index dim) : sum_(Vector::Zero(dim)), sumsq_(Vector::Zero(dim)) {}
  void add(const Vector& x) {
    sum_ += x;
    sumsq_ += x.cwiseProduct(x);
    ++n_;
  }
  Vector mean() const { return sum_ / static_cast<double>(n_); }
  Vector se() const {
    const Vector m = mean();
    const Vector var = (sumsq_ / static_cast<double>(n_) - m.cwiseProduct(m)).cwiseMax(0.0) *
                       (static_cast<double>(n_) / (n_ - 1));
    return (var / static_cast<double>(n_)).cwiseSqrt();
  }

 private:
  Vector sum_;
  Vector sumsq_;
  long n_ = 0;
};

// Trajectory of length `len` whose first state is drawn from `rho`.
Trajectory restarted_trajectory(const TabularMdp& m, const PolicyTable& probs, const Vector& rho, int len, Rng& rng) {
  const int s0 = draw(rho, rng);
  return sample_trajectory(m, probs, s0, len, 0, rng);
}

PolicySpec make_policy(int i, int S, int A, std::uint64_t seed) {
  return i % 2 == 0 ? PolicySpec::tabular(S, A) : PolicySpec::random_linear(S, A, 3, seed);
}

// Small ergodic instance shared by the Monte-Carlo suites: 3 states, 2
// actions, epoch length and burn-in from the theorem formulas at T = 64.
struct McInstance {
  TabularMdp m;
  PolicySpec spec = PolicySpec::tabular(3, 2);
  PolicyParams theta;
  PolicyTable probs;
  AverageRewardSolution sol;
  ChainDiagnostics chain;
  EstimatorConfig cfg;
  int H = 0;
};

McInstance three_state_instance() {
  McInstance in;
  in.m = random_ergodic_mdp(3, 2, 0.7, 31);
  Rng rng(32);
  in.theta.theta = 0.5 * random_normal(in.spec.dim(), rng);
  in.probs = policy_table(in.spec, in.theta);
  in.sol = solve_average_reward(in.m, in.spec, in.theta);
  in.chain = induced_chain(in.m, in.probs);
  in.cfg.T = 64;
  in.cfg.N = default_burn_in(in.chain.t_mix, in.cfg.T);
  in.H = epoch_length(kEpochConstant, in.chain.t_mix, in.chain.t_hit, in.cfg.T, 0.0);
  return in;
}

std::string instance_note(const McInstance& in) {
  return fmt("t_mix=%d t_hit=%.3f N=%d H=%d", in.chain.t_mix, in.chain.t_hit, in.cfg.N, in.H);
}

Vector advantages_hat(const McInstance& in, const Trajectory& tau) {
  Vector out(6);
  for (int s = 0; s < 3; ++s) {
    const Vector pi_s = in.probs.row(s).transpose();
    for (int a = 0; a < 2; ++a) out(s * 2 + a) = value_q_estimates(tau, s, a, pi_s, in.cfg).advantage();
  }
  return out;
}

Vector exact_advantages(const McInstance& in) {
  Vector out(6);
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 2; ++a) out(s * 2 + a) = in.sol.adv(s, a);
  }
  return out;
}

// Median over `reps` repetitions of the per-coordinate mean of `loss`.
Vector median_mean_loss(const McInstance& in, int H, int reps, int per_rep, std::uint64_t seed, Eigen::Index dim,
                        const std::function<Vector(const Trajectory&)>& loss) {
  std::vector<Vector> mses;
  Rng rng(seed);
  for (int r = 0; r < reps; ++r) {
    Vector acc = Vector::Zero(dim);
    for (int j = 0; j < per_rep; ++j) {
      acc += loss(restarted_trajectory(in.m, in.probs, in.chain.stationary, H, rng));
    }
    mses.push_back(acc / per_rep);
  }
  Vector out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    std::vector<double> col;
    for (const Vector& v : mses) col.push_back(v(i));
    out(i) = median(col);
  }
  return out;
}

}  // namespace

CheckResult check_oracle_gradient(const CheckOptions&) {
  Stopwatch sw;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int S = 2 + i % 4;
    const int A = 2 + (i / 4) % 2;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.2, 500 + i);
    const PolicySpec spec = make_policy(i, S, A, 900 + i);
    Rng rng(700 + i);
    const Vector theta = random_normal(spec.dim(), rng);
    const Vector g = exact_gradient(m, spec, {theta});
    const Vector fd = finite_difference_gradient(
        [&](const Vector& x) { return exact_gain(m, spec, {x}); }, theta, 1e-5);
    worst = std::max(worst, rel_err(g, fd));
  }
  const double secs = sw.seconds();
  return finish("oracle_gradient_fd", worst <= 1e-5 && secs < 10.0,
                fmt("instances=20 max_rel_err=%.3e (tol 1e-5) runtime=%.2fs (limit 10s)", worst, secs), sw);
}

CheckResult check_phi_identities(const CheckOptions& options) {
  Stopwatch sw;
  bool bitwise = true;
  bool psi_frozen = true;
  double grad_err = 0.0, hess_err = 0.0, hvp_dev = 0.0, hvp_scale = 0.0, basis_dev = 0.0, logp_err = 0.0;
  for (int i = 0; i < 12; ++i) {
    const int S = 2 + i % 3;
    const int A = 2 + (i / 3) % 2;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.3, 40 + i);
    const PolicySpec spec = make_policy(i, S, A, 80 + i);
    Rng rng(120 + i);
    const PolicyParams theta{0.7 * random_normal(spec.dim(), rng)};
    const PolicyTable probs = policy_table(spec, theta);
    const Vector rho = Vector::Constant(S, 1.0 / S);
    const EstimatorConfig cfg{4, 64, 0.0};
    const Trajectory tau = restarted_trajectory(m, probs, rho, 80, rng);

    const PhiFunctional phi(tau, S, A, cfg);
    const Vector grad = phi.gradient(spec, theta);
    bitwise = bitwise && bit_equal(grad, grad_estimate(spec, theta, tau, cfg));

    const PhiReport moved = phi_report(spec, PolicyParams{theta.theta + random_normal(spec.dim(), rng)}, tau, cfg);
    psi_frozen = psi_frozen && moved.psi1 == phi.psi1() && moved.psi2 == phi.psi2();

    const Vector fd_grad =
        finite_difference_gradient([&](const Vector& x) { return phi.value(spec, {x}); }, theta.theta, 1e-5);
    grad_err = std::max(grad_err, rel_err(grad, fd_grad));

    Matrix hess = phi.hessian(spec, theta);
    if (options.hessian_mutation) hess = options.hessian_mutation(hess);
    const Matrix fd_hess = finite_difference([&](const Vector& x) { return phi.gradient(spec, {x}); }, theta.theta, 1e-4);
    hess_err = std::max(hess_err, rel_err(hess, fd_hess));

    const Matrix B = hessian_estimate(spec, theta, tau, cfg);
    const Vector u = random_normal(spec.dim(), rng);
    const Vector Bu = B * u;
    hvp_dev = std::max(hvp_dev, (phi.hessian_vector_product(spec, theta, u) - Bu).cwiseAbs().maxCoeff());
    hvp_scale = std::max(hvp_scale, Bu.cwiseAbs().maxCoeff());
    for (int k = 0; k < spec.dim(); ++k) {
      const Vector col = phi.hessian_vector_product(spec, theta, Vector::Unit(spec.dim(), k));
      basis_dev = std::max(basis_dev, (col - B.col(k)).cwiseAbs().maxCoeff());
    }

    const Vector fd_logp = finite_difference_gradient(
        [&](const Vector& x) { return trajectory_log_likelihood(m, spec, {x}, tau, rho); }, theta.theta, 1e-5);
    logp_err = std::max(logp_err, rel_err(phi.logp_score(spec, theta), fd_logp));
  }
  const double secs = sw.seconds();
  const bool ok = bitwise && psi_frozen && grad_err <= 1e-6 && hess_err <= 1e-5 && hvp_dev <= 1e-12 &&
                  basis_dev <= 1e-12 && logp_err <= 1e-6 && secs < 30.0;
  return finish("phi_identities", ok,
                fmt("grad_phi==g:%s psi_frozen:%s grad_fd_rel=%.2e hess_fd_rel=%.2e hvp_abs_dev=%.2e "
                    "(max|Bu|=%.2f) basis_dev=%.2e logp_fd_rel=%.2e runtime=%.2fs",
                    bitwise ? "yes" : "no", psi_frozen ? "yes" : "no", grad_err, hess_err, hvp_dev, hvp_scale,
                    basis_dev, logp_err, secs),
                sw);
}

CheckResult check_advantage_statistics(const CheckOptions&) {
  Stopwatch sw;
  const McInstance in = three_state_instance();
  const Vector truth = exact_advantages(in);

  Moments mom(6);
  Rng rng(3001);
  for (int j = 0; j < 50000; ++j) {
    mom.add(advantages_hat(in, restarted_trajectory(in.m, in.probs, in.chain.stationary, in.H, rng)));
  }
  const Vector z = (mom.mean() - truth).cwiseQuotient(mom.se());
  const bool bias_ok = z.cwiseAbs().maxCoeff() <= 4.0;

  auto loss = [&](const Trajectory& tau) { return Vector((advantages_hat(in, tau) - truth).cwiseAbs2()); };
  const Vector mse_h = median_mean_loss(in, in.H, 5, 2000, 3002, 6, loss);
  const Vector mse_2h = median_mean_loss(in, 2 * in.H, 5, 2000, 3003, 6, loss);
  const bool mse_ok = (mse_2h.array() < mse_h.array()).all();

  const double secs = sw.seconds();
  const double max_ratio = (mse_2h.array() / mse_h.array()).maxCoeff();
  return finish("advantage_estimator_stats", bias_ok && mse_ok && secs <= 300.0,
                fmt("%s pairs=6 trajectories=50000 max|bias|/SE=%.2f (tol 4) mse(2H)/mse(H) max=%.3f "
                    "runtime=%.1fs",
                    instance_note(in).c_str(), z.cwiseAbs().maxCoeff(), max_ratio, secs),
                sw);
}

CheckResult check_gradient_statistics(const CheckOptions&) {
  Stopwatch sw;
  const McInstance in = three_state_instance();
  const Vector truth = exact_gradient(in.m, in.spec, in.theta);

  Moments mom(in.spec.dim());
  Rng rng(4001);
  for (int j = 0; j < 20000; ++j) {
    mom.add(grad_estimate(in.spec, in.theta, restarted_trajectory(in.m, in.probs, in.chain.stationary, in.H, rng),
                          in.cfg));
  }
  const Vector dev = (mom.mean() - truth).cwiseAbs();
  const Vector se = mom.se();
  const double slack = 0.02 * (1.0 + truth.norm());
  bool bias_ok = true;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < dev.size(); ++i) {
    const double tol = std::max(4.0 * se(i), slack);
    bias_ok = bias_ok && dev(i) <= tol;
    worst = std::max(worst, dev(i) / tol);
  }

  auto loss = [&](const Trajectory& tau) {
    return Vector::Constant(1, (grad_estimate(in.spec, in.theta, tau, in.cfg) - truth).squaredNorm());
  };
  const double mse_h = median_mean_loss(in, in.H, 5, 1000, 4002, 1, loss)(0);
  const double mse_2h = median_mean_loss(in, 2 * in.H, 5, 1000, 4003, 1, loss)(0);
  const bool mse_ok = mse_2h < mse_h;

  const double secs = sw.seconds();
  return finish("gradient_estimator_stats", bias_ok && mse_ok && secs <= 300.0,
                fmt("%s trajectories=20000 |grad J|=%.4f max dev/tol=%.3f E|g-gradJ|^2: H %.3e -> 2H %.3e "
                    "runtime=%.1fs",
                    instance_note(in).c_str(), truth.norm(), worst, mse_h, mse_2h, secs),
                sw);
}

CheckResult check_hessian_statistics(const CheckOptions&) {
  Stopwatch sw;
  const TabularMdp m = random_ergodic_mdp(2, 2, 0.3, 51);
  const PolicySpec spec = PolicySpec::tabular(2, 2);
  Rng init(52);
  const PolicyParams theta{0.5 * random_normal(spec.dim(), init)};
  const PolicyTable probs = policy_table(spec, theta);
  const ChainDiagnostics chain = induced_chain(m, probs);
  const Vector rho = chain.stationary;  // fixed start law for every theta below
  EstimatorConfig cfg;
  cfg.T = 64;
  cfg.N = default_burn_in(chain.t_mix, cfg.T);
  const int len = epoch_length(kEpochConstant, chain.t_mix, chain.t_hit, cfg.T, 0.0);
  const int n = 20000;
  const double h = 0.1;
  const int d = spec.dim();

  // Per seed: B at theta, and central differences of g with common random numbers.
  Moments asym(d * d);
  Moments diff(d * d);
  Moments b_mom(d * d);
  std::vector<PolicyTable> plus(static_cast<std::size_t>(d)), minus(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    plus[static_cast<std::size_t>(j)] = policy_table(spec, {theta.theta + h * Vector::Unit(d, j)});
    minus[static_cast<std::size_t>(j)] = policy_table(spec, {theta.theta - h * Vector::Unit(d, j)});
  }
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = 5000 + static_cast<std::uint64_t>(i);
    Rng rng(seed);
    const Matrix B = hessian_estimate(spec, theta, restarted_trajectory(m, probs, rho, len, rng), cfg);
    const Matrix anti = B - B.transpose();
    Matrix fd(d, d);
    for (int j = 0; j < d; ++j) {
      Rng rp(seed), rm(seed);
      const Vector gp = grad_estimate(spec, {theta.theta + h * Vector::Unit(d, j)},
                                      restarted_trajectory(m, plus[static_cast<std::size_t>(j)], rho, len, rp), cfg);
      const Vector gm = grad_estimate(spec, {theta.theta - h * Vector::Unit(d, j)},
                                      restarted_trajectory(m, minus[static_cast<std::size_t>(j)], rho, len, rm), cfg);
      fd.col(j) = (gp - gm) / (2.0 * h);
    }
    asym.add(anti.reshaped());
    diff.add((B - fd).reshaped());
    b_mom.add(B.reshaped());
  }
  // Some entries are zero up to round-off (scores in one state are collinear
  // for A=2); a mean/SE ratio of round-off carries no information.
  const double floor = 1e-9 * (1.0 + b_mom.mean().cwiseAbs().maxCoeff());
  auto zscore = [floor](const Moments& mo) {
    Vector z = mo.mean().cwiseAbs();
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = z(k) <= floor ? 0.0 : z(k) / std::max(mo.se()(k), 1e-300);
    return z;
  };
  const Vector za = zscore(asym);
  const Vector zd = zscore(diff);
  const double asym_abs = asym.mean().cwiseAbs().maxCoeff();
  double worst_asym = 0.0;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      if (r != c) worst_asym = std::max(worst_asym, za(c * d + r));
    }
  }
  const double worst_fd = zd.maxCoeff();
  const double secs = sw.seconds();
  const Matrix b_bar = b_mom.mean().reshaped(d, d);
  return finish("hessian_estimator_stats", worst_asym <= 4.0 && worst_fd <= 4.0 && secs <= 600.0,
                fmt("S=2 d=4 t_mix=%d |tau|=%d N=%d trajectories=%d h=%.2f max|Bbar-Bbar^T|/SE=%.2f "
                    "max|Bbar-FD(mean g)|/SE=%.2f max|Bbar-Bbar^T|=%.4f |Bbar|_max=%.3f runtime=%.1fs",
                    chain.t_mix, len, cfg.N, n, h, worst_asym, worst_fd, asym_abs, b_bar.cwiseAbs().maxCoeff(), secs),
                sw);
}

CheckResult check_smoothness(const CheckOptions&) {
  Stopwatch sw;
  int violations = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();
  double max_l = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int S = 2 + i % 3;
    const int A = 2 + (i / 3) % 2;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.2, 6000 + i % 5);
    const PolicySpec spec = make_policy(i, S, A, 6100 + i);
    Rng rng(6200 + i);
    const Vector theta = random_normal(spec.dim(), rng);
    Vector dir = random_normal(spec.dim(), rng);
    dir *= rng.uniform() / dir.norm();
    const Vector theta_bar = theta + dir;

    double L = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const Vector point = theta + (k / 10.0) * dir;
      const Matrix hess = finite_difference([&](const Vector& x) { return exact_gradient(m, spec, {x}); }, point, 1e-4);
      L = std::max(L, spectral_norm(hess));
    }
    L *= 1.5;
    max_l = std::max(max_l, L);
    const double J = exact_gain(m, spec, {theta});
    const double J_bar = exact_gain(m, spec, {theta_bar});
    const Vector g = exact_gradient(m, spec, {theta});
    // J* cancels on both sides.
    const double lhs = -J_bar;
    const double rhs = -J - g.dot(dir) + 0.5 * L * dir.squaredNorm() + 1e-6;
    worst_margin = std::max(worst_margin, lhs - rhs);
    if (lhs > rhs) ++violations;
  }
  return finish("approximate_smoothness", violations == 0,
                fmt("pairs=50 violations=%d worst(lhs-rhs)=%.3e max L_emp=%.3f", violations, worst_margin, max_l), sw);
}

CheckResult check_structure(const CheckOptions&) {
  Stopwatch sw;
  std::vector<std::string> failures;

  // Psi weights: frozen under theta changes and equal to a recomputation from raw data.
  {
    const TabularMdp m = random_ergodic_mdp(3, 3, 0.3, 71);
    const PolicySpec spec = PolicySpec::tabular(3, 3);
    Rng rng(72);
    const EstimatorConfig cfg{6, 64, 0.0};
    bool ok = true;
    for (int rep = 0; rep < 10; ++rep) {
      const PolicyParams theta{random_normal(spec.dim(), rng)};
      const Trajectory tau = restarted_trajectory(m, policy_table(spec, theta), Vector::Constant(3, 1.0 / 3), 200, rng);
      const PhiReport a = phi_report(spec, theta, tau, cfg);
      const PhiReport b = phi_report(spec, {theta.theta + random_normal(spec.dim(), rng)}, tau, cfg);
      const VisitTable table(tau, 3, 3, cfg.N);
      std::vector<double> psi1, psi2;
      for (std::int64_t t = tau.start_index + cfg.N; t <= tau.end_index(); ++t) {
        psi1.push_back(0.0 - table.mean_sum(tau.at(t).state));
        psi2.push_back(0.0 - table.mean_sum_with_action(tau.at(t).state, tau.at(t).action));
      }
      ok = ok && a.psi1 == b.psi1 && a.psi2 == b.psi2 && a.psi1 == psi1 && a.psi2 == psi2;
    }
    if (!ok) failures.push_back("psi_invariance");
  }

  // Optimizer runs: step-norm law, momentum identities, segment and look-ahead geometry, accounting.
  double step_dev = 0.0, momentum_res = 0.0, segment_dev = 0.0;
  {
    const TabularMdp m = random_ergodic_mdp(4, 3, 0.3, 81);
    const PolicySpec spec = PolicySpec::tabular(4, 3);
    const PolicyParams zero{Vector::Zero(spec.dim())};
    const EstimatorConfig cfg{10, 10000, 0.0};
    ScheduleSpec sched;
    sched.G = estimate_bounds(spec, {zero}).G;
    sched.mu = fisher_and_npg(m, spec, zero).min_positive_eig;
    sched.H = 100;
    sched.K = 60;
    sched.T = 6000;
    for (Variant v : {Variant::Igt, Variant::Hessian}) {
      sched.variant = v;
      const RunResult r = v == Variant::Igt ? run_pg_igt(m, spec, sched, cfg, zero, zero, 82)
                                            : run_hessian_pg(m, spec, sched, cfg, zero, zero, 82);
      const RunResult again = v == Variant::Igt ? run_pg_igt(m, spec, sched, cfg, zero, zero, 82)
                                                : run_hessian_pg(m, spec, sched, cfg, zero, zero, 82);
      if (r.reward_trace != again.reward_trace || r.regret_trace != again.regret_trace) {
        failures.push_back(std::string("determinism_") + to_string(v));
      }
      if (r.reward_trace.size() != static_cast<std::size_t>(sched.H * sched.K)) {
        failures.push_back(std::string("epoch_accounting_") + to_string(v));
      }
      bool bit_ok = true;
      double prev_gamma = 0.0;
      for (const EpochRecord& e : r.epochs) {
        const double eta = e.step.eta;
        const double scale = 1.0 + e.theta.norm();
        if (e.direction.norm() > 0.0) {
          step_dev = std::max(step_dev, std::abs((e.theta_next - e.theta).norm() - e.step.gamma) / scale);
        }
        Vector expect;
        if (v == Variant::Igt) {
          expect = (1.0 - eta) * e.direction_prev + eta * e.gradient;
          if (e.k >= 2) {
            const double bound = ((1.0 - eta) / eta) * prev_gamma;
            const double gap = (e.theta_eval - e.theta).norm();
            segment_dev = std::max(segment_dev, (gap - bound) / scale);
          }
        } else {
          expect = (1.0 - eta) * (e.direction_prev + e.correction) + eta * e.gradient;
          const double total = (e.theta - e.theta_prev).norm();
          const double split = (e.theta_eval - e.theta_prev).norm() + (e.theta - e.theta_eval).norm();
          segment_dev = std::max(segment_dev, std::abs(split - total) / scale);
        }
        bit_ok = bit_ok && bit_equal(expect, e.direction);
        const Vector res = v == Variant::Igt
                               ? Vector(e.direction - (1.0 - eta) * e.direction_prev - eta * e.gradient)
                               : Vector(e.direction - (1.0 - eta) * (e.direction_prev + e.correction) -
                                        eta * e.gradient);
        momentum_res = std::max(momentum_res, res.cwiseAbs().maxCoeff() / (1.0 + e.direction.norm()));
        prev_gamma = e.step.gamma;
      }
      if (!bit_ok) failures.push_back(std::string("momentum_recompute_") + to_string(v));
    }
  }
  if (step_dev > 1e-12) failures.push_back("step_norm_law");
  if (momentum_res > 1e-12) failures.push_back("momentum_identity");
  if (segment_dev > 1e-12) failures.push_back("iterate_geometry");

  // Schedules against their closed forms.
  double sched_err = 0.0;
  {
    ScheduleSpec s;
    s.G = 1.0;
    s.mu = 0.5;
    s.variant = Variant::Hessian;
    sched_err = std::max(sched_err, std::abs(schedule(s, 1).gamma - 4.0) / 4.0);
    sched_err = std::max(sched_err, std::abs(schedule(s, 1).eta - 2.0 / 3.0) / (2.0 / 3.0));
    s.variant = Variant::Igt;
    sched_err = std::max(sched_err, std::abs(schedule(s, 2).eta - std::pow(0.5, 0.8)) / std::pow(0.5, 0.8));
    s.G = 1.7;
    s.mu = 0.03;
    for (Variant v : {Variant::Igt, Variant::Hessian, Variant::Vanilla}) {
      s.variant = v;
      for (int k = 1; k <= 200; ++k) {
        const StepSizes st = schedule(s, k);
        const double gamma = 6.0 * 1.7 / (0.03 * (k + 2.0));
        const double eta = v == Variant::Igt ? std::exp(0.8 * std::log(2.0 / (k + 2.0))) : 2.0 / (k + 2.0);
        sched_err = std::max(sched_err, std::abs(st.gamma - gamma) / gamma);
        sched_err = std::max(sched_err, std::abs(st.eta - eta) / eta);
      }
    }
  }
  if (sched_err > 1e-15) failures.push_back("schedule_closed_form");

  double pi_err = 0.0;
  for (int i = 0; i < 10; ++i) {
    const TabularMdp m = random_ergodic_mdp(4, 3, 0.1, 90 + i);
    pi_err = std::max(pi_err, std::abs(optimal_gain(m).gain - brute_force_optimal_gain(m)));
  }
  if (pi_err > 1e-9) failures.push_back("optimal_gain_vs_enumeration");

  std::string failed;
  for (const auto& f : failures) failed += (failed.empty() ? "" : ",") + f;
  return finish("structural_invariants", failures.empty(),
                fmt("step_norm_dev=%.2e momentum_res=%.2e geometry_dev=%.2e schedule_rel_err=%.2e "
                    "optimal_gain_err=%.2e%s%s",
                    step_dev, momentum_res, segment_dev, sched_err, pi_err, failed.empty() ? "" : " failed=",
                    failed.c_str()),
                sw);
}

CheckResult check_regret_comparison(const CheckOptions&) {
  Stopwatch sw;
  const nlohmann::json mdp_json = {{"S", 4}, {"A", 3}, {"smoothing", 0.3}, {"seed", 2024}};
  const TabularMdp m = build_mdp(mdp_json);
  const PolicySpec spec = PolicySpec::tabular(4, 3);
  const ChainDiagnostics chain = induced_chain(m, policy_table(spec, {Vector::Zero(spec.dim())}));
  // Desk-scale settings shared by all three algorithms. The theorem burn-in
  // (7 t_mix ceil(log2 T)) exceeds H/2 here, and the measured G/mu gives a
  // first normalized step of ~24 that saturates the softmax in one epoch.
  const int target_h = 200;
  const int burn_in = 3 * chain.t_mix;
  const double step_scale = 0.2;  // G/mu, so gamma_k = 1.2 / (k+2)

  auto make = [&](Variant v, std::int64_t T) {
    const double log_t = std::log2(static_cast<double>(T));
    const double base = chain.t_mix * chain.t_hit * log_t * log_t * std::pow(static_cast<double>(T), epoch_exponent(v));
    nlohmann::json j = {{"mdp", mdp_json},
                        {"policy", {{"kind", "tabular_softmax"}}},
                        {"algorithm", to_string(v)},
                        {"T", T},
                        {"c_H", target_h / base * (1.0 - 1e-12)},
                        {"N_override", burn_in},
                        {"G_override", step_scale},
                        {"mu_override", 1.0},
                        {"seeds", {1}}};
    return resolve(parse_config(j));
  };

  const std::int64_t T = 200000;
  const ResolvedExperiment igt = make(Variant::Igt, T);
  const ResolvedExperiment hes = make(Variant::Hessian, T);
  const ResolvedExperiment van = make(Variant::Vanilla, T);
  const ResolvedExperiment hes2 = make(Variant::Hessian, 2 * T);

  std::vector<double> reg_igt, reg_hes, reg_van, rate_t, rate_2t;
  int learned = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const RunResult a = run_once(hes, seed, false);
    const RunResult b = run_once(igt, seed, false);
    const RunResult c = run_once(van, seed, false);
    const RunResult a2 = run_once(hes2, seed, false);
    reg_hes.push_back(a.final_regret());
    reg_igt.push_back(b.final_regret());
    reg_van.push_back(c.final_regret());
    rate_t.push_back(a.final_regret() / static_cast<double>(a.reward_trace.size()));
    rate_2t.push_back(a2.final_regret() / static_cast<double>(a2.reward_trace.size()));
    const std::size_t n = a.reward_trace.size();
    const std::size_t w = n / 10;
    double first = 0.0, last = 0.0;
    for (std::size_t t = 0; t < w; ++t) {
      first += a.reward_trace[t];
      last += a.reward_trace[n - w + t];
    }
    const double gap_first = a.optimal_gain - first / w;
    const double gap_last = a.optimal_gain - last / w;
    if (gap_last < gap_first) ++learned;
  }
  const double mh = median(reg_hes), mi = median(reg_igt), mv = median(reg_van);
  const double r1 = median(rate_t), r2 = median(rate_2t);
  const bool ok = learned >= 8 && mh <= mi && mi <= mv && r2 < r1;
  const double secs = sw.seconds();
  return finish("regret_comparison", ok && secs <= 1200.0,
                fmt("H: hessian=%d igt=%d vanilla=%d N=%d G/mu=%.2f T=%lld; learning seeds=%d/10; median regret "
                    "hessian=%.1f igt=%.1f vanilla=%.1f; hessian Reg/T: T %.5f -> 2T %.5f runtime=%.1fs",
                    hes.schedule.H, igt.schedule.H, van.schedule.H, burn_in, step_scale, static_cast<long long>(T), learned, mh,
                    mi, mv, r1, r2, secs),
                sw);
}

CheckResult check_mixing(const CheckOptions&) {
  Stopwatch sw;
  int geo_fail = 0, tail_fail = 0, tail_checked = 0;
  double worst_geo = 0.0, worst_tail = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int S = 2 + i % 5;
    const int A = 2 + i % 2;
    const double smoothing = 0.05 + 0.05 * (i % 6);
    const TabularMdp m = random_ergodic_mdp(S, A, smoothing, 7000 + i);
    const PolicySpec spec = PolicySpec::tabular(S, A);
    Rng rng(7100 + i);
    const ChainDiagnostics chain = induced_chain(m, policy_table(spec, {random_normal(spec.dim(), rng)}));
    const Matrix& P = chain.induced_kernel;
    const Vector& d = chain.stationary;
    const int tm = chain.t_mix;
    // Powers of P - 1 d^T equal P^t - 1 d^T without the cancellation floor.
    const Matrix Q = P - Vector::Ones(S) * d.transpose();
    Matrix Qt = Q;
    auto max_l1 = [&](const Matrix& M) { return M.cwiseAbs().rowwise().sum().maxCoeff(); };
    for (int t = 2; t <= 6 * tm; ++t) {
      Qt = Qt * Q;
      if (t < 2 * tm) continue;
      const double bound = 2.0 * std::pow(2.0, -static_cast<double>(t) / tm);
      const double l1 = max_l1(Qt);
      worst_geo = std::max(worst_geo, l1 / bound);
      if (l1 > bound) ++geo_fail;
    }
    for (int T : {64, 256}) {
      if (T < 4 * tm) continue;
      ++tail_checked;
      const int N = static_cast<int>(std::lround(7.0 * tm * std::log2(static_cast<double>(T))));
      Matrix Qn = Matrix::Identity(S, S);
      Matrix base = Q;
      for (int e = N; e > 0; e >>= 1) {
        if (e & 1) Qn = Qn * base;
        base = base * base;
      }
      Vector tail = Vector::Zero(S);
      for (int guard = 0; guard < 100000; ++guard) {
        const Vector inc = Qn.cwiseAbs().rowwise().sum();
        tail += inc;
        if (inc.maxCoeff() < 1e-16) break;
        Qn = Qn * Q;
      }
      const double bound = std::pow(static_cast<double>(T), -6.0);
      worst_tail = std::max(worst_tail, tail.maxCoeff() / bound);
      if (tail.maxCoeff() > bound) ++tail_fail;
    }
  }
  return finish("mixing_diagnostics", geo_fail == 0 && tail_fail == 0,
                fmt("chains=20 geometric violations=%d (max l1/bound=%.3f) tail violations=%d of %d "
                    "(max tail/T^-6=%.3e)",
                    geo_fail, worst_geo, tail_fail, tail_checked, worst_tail),
                sw);
}

CheckResult check_policy_derivatives(const CheckOptions&) {
  Stopwatch sw;
  double score_err = 0.0, hess_err = 0.0, sym = 0.0, max_eig = -1.0, norm_err = 0.0, mean_err = 0.0, fisher = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int S = 1 + i % 4;
    const int A = 2 + i % 3;
    const PolicySpec spec = make_policy(i, S, A, 8000 + i);
    Rng rng(8100 + i);
    const PolicyParams theta{1.5 * random_normal(spec.dim(), rng)};
    const int s = static_cast<int>(rng.uniform() * S);
    const int a = static_cast<int>(rng.uniform() * A);
    const Vector sc = score(spec, theta, s, a);
    const Vector fd = finite_difference_gradient([&](const Vector& x) { return log_prob(spec, {x}, s, a); },
                                                 theta.theta, 1e-5);
    score_err = std::max(score_err, rel_err(sc, fd));
    const Matrix H = score_hessian(spec, theta, s, a);
    const Matrix fdh = finite_difference([&](const Vector& x) { return score(spec, {x}, s, a); }, theta.theta, 1e-4);
    hess_err = std::max(hess_err, (H - fdh).cwiseAbs().maxCoeff());
    sym = std::max(sym, (H - H.transpose()).cwiseAbs().maxCoeff());
    max_eig = std::max(max_eig, Eigen::SelfAdjointEigenSolver<Matrix>(H, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
    const Vector pi = action_probs(spec, theta, s);
    norm_err = std::max(norm_err, std::abs(pi.sum() - 1.0));
    Vector mean = Vector::Zero(spec.dim());
    Matrix second = Matrix::Zero(spec.dim(), spec.dim());
    for (int b = 0; b < A; ++b) {
      const Vector sb = score(spec, theta, s, b);
      mean += pi(b) * sb;
      second += pi(b) * (sb * sb.transpose() + score_hessian(spec, theta, s, b));
    }
    mean_err = std::max(mean_err, mean.cwiseAbs().maxCoeff());
    fisher = std::max(fisher, second.cwiseAbs().maxCoeff());
  }
  const bool ok = score_err <= 1e-6 && hess_err <= 1e-5 && sym <= 1e-12 && max_eig <= 1e-10 && norm_err <= 1e-14 &&
                  mean_err <= 1e-12 && fisher <= 1e-10;
  return finish("policy_derivatives", ok,
                fmt("inputs=50 score_fd_rel=%.2e hess_fd_abs=%.2e asym=%.1e max_eig=%.1e sum_pi_err=%.1e "
                    "score_mean=%.1e sum_hess_pi=%.1e",
                    score_err, hess_err, sym, max_eig, norm_err, mean_err, fisher),
                sw);
}

CheckResult check_poisson_solutions(const CheckOptions&) {
  Stopwatch sw;
  double residual = 0.0, v_err = 0.0, norm_err = 0.0, v_ratio = 0.0, q_ratio = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int S = 2 + i % 5;
    const int A = 1 + i % 3;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.1, 8500 + i);
    const PolicySpec spec = PolicySpec::tabular(S, A);
    Rng rng(8600 + i);
    const PolicyTable probs = policy_table(spec, {random_normal(spec.dim(), rng)});
    const AverageRewardSolution sol = evaluate_policy(m, probs);
    const int tm = induced_chain(m, probs).t_mix;
    for (int s = 0; s < S; ++s) {
      double vs = 0.0;
      for (int a = 0; a < A; ++a) {
        const double target = m.reward(s, a) - sol.gain + m.kernel.row(m.row(s, a)).dot(sol.v);
        residual = std::max(residual, std::abs(sol.q(s, a) - target));
        vs += probs(s, a) * sol.q(s, a);
      }
      v_err = std::max(v_err, std::abs(vs - sol.v(s)));
    }
    norm_err = std::max(norm_err, std::abs(sol.stationary.dot(sol.v)));
    v_ratio = std::max(v_ratio, sol.v.cwiseAbs().maxCoeff() / (5.0 * tm));
    q_ratio = std::max(q_ratio, sol.q.cwiseAbs().maxCoeff() / (6.0 * tm));
  }
  const bool ok = residual <= 1e-9 && v_err <= 1e-9 && norm_err <= 1e-9 && v_ratio <= 1.0 && q_ratio <= 1.0;
  return finish("poisson_solutions", ok,
                fmt("instances=20 bellman_res=%.1e v_consistency=%.1e sum_dv=%.1e max|v|/5t_mix=%.3f "
                    "max|q|/6t_mix=%.3f",
                    residual, v_err, norm_err, v_ratio, q_ratio),
                sw);
}

CheckResult check_performance_difference(const CheckOptions&) {
  Stopwatch sw;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int S = 2 + i % 4;
    const int A = 2 + i % 2;
    const TabularMdp m = random_ergodic_mdp(S, A, 0.2, 8700 + i);
    const PolicySpec spec = PolicySpec::tabular(S, A);
    Rng rng(8800 + i);
    const PolicyTable p = policy_table(spec, {random_normal(spec.dim(), rng)});
    const PolicyTable q = policy_table(spec, {random_normal(spec.dim(), rng)});
    const AverageRewardSolution sp = evaluate_policy(m, p);
    const AverageRewardSolution sq = evaluate_policy(m, q);
    double rhs = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) rhs += sp.stationary(s) * p(s, a) * sq.adv(s, a);
    }
    worst = std::max(worst, std::abs((sp.gain - sq.gain) - rhs));
  }
  return finish("performance_difference", worst <= 1e-9, fmt("pairs=20 max_abs_err=%.2e", worst), sw);
}

CheckResult check_gradient_domination(const CheckOptions&) {
  Stopwatch sw;
  const TabularMdp m = random_ergodic_mdp(3, 3, 0.2, 8900);
  const PolicySpec spec = PolicySpec::tabular(3, 3);
  const double j_star = optimal_gain(m).gain;
  int checked = 0, skipped = 0, violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 20; ++i) {
    Rng rng(8901 + i);
    const PolicyParams theta{random_normal(spec.dim(), rng)};
    const FisherInfo f = fisher_and_npg(m, spec, theta);
    if (f.min_positive_eig <= 1e-8) {
      ++skipped;
      continue;
    }
    ++checked;
    const double G = estimate_bounds(spec, {theta}).G;
    const double gap = j_star - exact_gain(m, spec, theta);
    const double rhs = (G / f.min_positive_eig) * exact_gradient(m, spec, theta).norm() + 1e-6;
    worst = std::max(worst, gap - rhs);
    if (gap > rhs) ++violations;
  }
  return finish("gradient_domination", violations == 0,
                fmt("checked=%d skipped=%d violations=%d worst(gap-bound)=%.3e", checked, skipped, violations, worst),
                sw);
}

std::vector<NamedCheck> all_checks() {
  return {
      {"oracle_gradient_fd", check_oracle_gradient, false},
      {"phi_identities", check_phi_identities, false},
      {"approximate_smoothness", check_smoothness, false},
      {"structural_invariants", check_structure, false},
      {"mixing_diagnostics", check_mixing, false},
      {"policy_derivatives", check_policy_derivatives, false},
      {"poisson_solutions", check_poisson_solutions, false},
      {"performance_difference", check_performance_difference, false},
      {"gradient_domination", check_gradient_domination, false},
      {"advantage_estimator_stats", check_advantage_statistics, true},
      {"gradient_estimator_stats", check_gradient_statistics, true},
      {"hessian_estimator_stats", check_hessian_statistics, true},
      {"regret_comparison", check_regret_comparison, true},
  };
}

std::vector<CheckResult> run_checks(CheckLevel level, const CheckOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  for (const NamedCheck& c : all_checks()) {
    if (c.monte_carlo && level == CheckLevel::Fast) continue;
    CheckResult r;
    try {
      r = c.run(options);
    } catch (const std::exception& e) {
      r = {c.name, false, std::string("error: ") + e.what(), 0.0};
    }
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_check_line(const CheckResult& r) {
  return fmt("%s %-26s %s [%.2fs]", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
}

}  // namespace avgpg
