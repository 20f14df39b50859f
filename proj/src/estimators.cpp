#include "avgpg/estimators.hpp"

#include <cmath>
#include <string>

#include "avgpg/error.hpp"

namespace avgpg {

namespace {

void require_longer_than_burn_in(const Trajectory& tau, const EstimatorConfig& cfg) {
  if (cfg.N < 1) throw Error(ErrorKind::InvalidArgument, "N must be >= 1");
  if (tau.size() <= cfg.N) {
    throw Error(ErrorKind::TrajectoryTooShort,
                "|tau| = " + std::to_string(tau.size()) + " must exceed N = " + std::to_string(cfg.N));
  }
}

void check_floor(double pi, const EstimatorConfig& cfg, int s, int a) {
  if (cfg.pi_floor > 0.0 && pi < cfg.pi_floor) {
    throw Error(ErrorKind::ProbabilityUnderflow, "pi(" + std::to_string(a) + "|" + std::to_string(s) +
                                                      ") = " + std::to_string(pi) + " below floor");
  }
}

double window_sum(const Trajectory& tau, std::int64_t start, int N) {
  double y = 0.0;
  for (std::int64_t t = start; t < start + N; ++t) y += tau.at(t).reward;
  return y;
}

// Scores for every (s, a), index s * A + a.
std::vector<Vector> score_table(const PolicySpec& spec, const PolicyTable& probs) {
  std::vector<Vector> table;
  table.reserve(static_cast<std::size_t>(spec.n_states() * spec.n_actions()));
  for (int s = 0; s < spec.n_states(); ++s) {
    const Matrix jac_t = spec.logit_jacobian(s).transpose();
    for (int a = 0; a < spec.n_actions(); ++a) {
      Vector centered = -probs.row(s).transpose();
      centered(a) += 1.0;
      table.push_back(jac_t * centered);
    }
  }
  return table;
}

}  // namespace

int default_burn_in(int t_mix, std::int64_t T) {
  const double log_t = std::ceil(std::log2(static_cast<double>(std::max<std::int64_t>(T, 2))));
  return std::max(1, static_cast<int>(7.0 * t_mix * log_t));
}

ValueEstimates value_q_estimates(const Trajectory& tau, int s, int a, const Vector& probs_at_s,
                                 const EstimatorConfig& cfg) {
  require_longer_than_burn_in(tau, cfg);
  const double pi = probs_at_s(a);
  check_floor(pi, cfg, s, a);

  ValueEstimates out;
  double with_action = 0.0;
  std::int64_t xi = tau.start_index;
  const std::int64_t last_start = tau.end_index() - cfg.N;
  while (xi <= last_start) {
    if (tau.at(xi).state == s) {
      const double y = window_sum(tau, xi, cfg.N);
      out.visit_starts.push_back(xi);
      out.visit_sums.push_back(y);
      if (tau.at(xi).action == a) with_action += y;
      xi += 2 * cfg.N;
    } else {
      ++xi;
    }
  }
  out.visits = static_cast<int>(out.visit_starts.size());
  if (out.visits > 0) {
    double total = 0.0;
    for (double y : out.visit_sums) total += y;
    out.v_hat = total / out.visits;
    out.q_hat = (with_action / out.visits) / pi;
  }
  return out;
}

VisitTable::VisitTable(const Trajectory& tau, int n_states, int n_actions, int N)
    : n_actions_(n_actions),
      visits_(static_cast<std::size_t>(n_states), 0),
      sum_(static_cast<std::size_t>(n_states), 0.0),
      sum_by_action_(static_cast<std::size_t>(n_states * n_actions), 0.0) {
  // One pass over time with an independent resume pointer per state; this
  // visits the same windows as running the per-state scan S times.
  std::vector<std::int64_t> next_allowed(static_cast<std::size_t>(n_states), tau.start_index);
  const std::int64_t last_start = tau.end_index() - N;
  for (std::int64_t t = tau.start_index; t <= last_start; ++t) {
    const Step& step = tau.at(t);
    auto& resume = next_allowed[static_cast<std::size_t>(step.state)];
    if (t < resume) continue;
    const double y = window_sum(tau, t, N);
    ++visits_[static_cast<std::size_t>(step.state)];
    sum_[static_cast<std::size_t>(step.state)] += y;
    sum_by_action_[static_cast<std::size_t>(step.state * n_actions + step.action)] += y;
    resume = t + 2 * N;
  }
}

double VisitTable::mean_sum(int s) const {
  const int i = visits(s);
  return i > 0 ? sum_[static_cast<std::size_t>(s)] / i : 0.0;
}

double VisitTable::mean_sum_with_action(int s, int a) const {
  const int i = visits(s);
  return i > 0 ? sum_by_action_[static_cast<std::size_t>(s * n_actions_ + a)] / i : 0.0;
}

Vector grad_estimate(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                     const EstimatorConfig& cfg) {
  require_longer_than_burn_in(tau, cfg);
  const PolicyTable probs = policy_table(spec, theta);
  const auto scores = score_table(spec, probs);
  const VisitTable table(tau, spec.n_states(), spec.n_actions(), cfg.N);

  Vector g = Vector::Zero(spec.dim());
  for (std::int64_t t = tau.start_index + cfg.N; t <= tau.end_index(); ++t) {
    const auto [s, a, r] = tau.at(t);
    const double pi = probs(s, a);
    check_floor(pi, cfg, s, a);
    const double q_hat = table.mean_sum_with_action(s, a) / pi;
    const double v_hat = table.mean_sum(s);
    const double adv = q_hat - v_hat;
    g += adv * scores[static_cast<std::size_t>(s * spec.n_actions() + a)];
  }
  g /= static_cast<double>(tau.size() - cfg.N);
  return g;
}

EstimatorStats estimator_stats(const Trajectory& tau, int n_states, int n_actions, const EstimatorConfig& cfg) {
  require_longer_than_burn_in(tau, cfg);
  const VisitTable table(tau, n_states, n_actions, cfg.N);
  EstimatorStats stats;
  std::int64_t zero = 0;
  double visit_total = 0.0;
  for (std::int64_t t = tau.start_index + cfg.N; t <= tau.end_index(); ++t) {
    const int i = table.visits(tau.at(t).state);
    visit_total += i;
    if (i == 0) ++zero;
  }
  const double n = static_cast<double>(tau.size() - cfg.N);
  stats.mean_visits = visit_total / n;
  stats.zero_visit_fraction = static_cast<double>(zero) / n;
  return stats;
}

PhiFunctional::PhiFunctional(const Trajectory& tau, int n_states, int n_actions, const EstimatorConfig& cfg)
    : n_states_(n_states), n_actions_(n_actions), window_(0), pi_floor_(cfg.pi_floor) {
  require_longer_than_burn_in(tau, cfg);
  const VisitTable table(tau, n_states, n_actions, cfg.N);
  window_ = tau.size() - cfg.N;

  std::vector<int> group_of(static_cast<std::size_t>(n_states * n_actions), -1);
  auto group_index = [&](int s, int a) {
    int& g = group_of[static_cast<std::size_t>(s * n_actions + a)];
    if (g < 0) {
      g = static_cast<int>(groups_.size());
      groups_.push_back({s, a, 0.0, 0.0, 0});
    }
    return static_cast<std::size_t>(g);
  };

  for (std::int64_t t = tau.start_index; t <= tau.end_index(); ++t) {
    const Step& step = tau.at(t);
    Group& group = groups_[group_index(step.state, step.action)];
    ++group.full_count;
    if (t < tau.start_index + cfg.N) continue;
    const double psi1 = 0.0 - table.mean_sum(step.state);
    const double psi2 = 0.0 - table.mean_sum_with_action(step.state, step.action);
    window_states_.push_back(step.state);
    window_actions_.push_back(step.action);
    psi1_.push_back(psi1);
    psi2_.push_back(psi2);
    group.psi1_sum += psi1;
    group.psi2_sum += psi2;
  }
}

double PhiFunctional::value(const PolicySpec& spec, const PolicyParams& theta) const {
  const PolicyTable probs = policy_table(spec, theta);
  Matrix log_probs(n_states_, n_actions_);
  for (int s = 0; s < n_states_; ++s) {
    for (int a = 0; a < n_actions_; ++a) log_probs(s, a) = log_prob(spec, theta, s, a);
  }
  double phi = 0.0;
  for (std::size_t k = 0; k < psi1_.size(); ++k) {
    const int s = window_states_[k];
    const int a = window_actions_[k];
    phi += psi1_[k] * log_probs(s, a) + psi2_[k] / probs(s, a);
  }
  return phi / window_;
}

Vector PhiFunctional::gradient(const PolicySpec& spec, const PolicyParams& theta) const {
  const PolicyTable probs = policy_table(spec, theta);
  const auto scores = score_table(spec, probs);
  const EstimatorConfig floor_cfg{1, 1, pi_floor_};
  Vector grad = Vector::Zero(spec.dim());
  // d/dtheta [Psi1 log pi + Psi2 / pi] = (Psi1 - Psi2 / pi) score.
  for (std::size_t k = 0; k < psi1_.size(); ++k) {
    const int s = window_states_[k];
    const int a = window_actions_[k];
    const double pi = probs(s, a);
    check_floor(pi, floor_cfg, s, a);
    const double coef = psi1_[k] - psi2_[k] / pi;
    grad += coef * scores[static_cast<std::size_t>(s * n_actions_ + a)];
  }
  grad /= static_cast<double>(window_);
  return grad;
}

Matrix PhiFunctional::hessian(const PolicySpec& spec, const PolicyParams& theta) const {
  const PolicyTable probs = policy_table(spec, theta);
  const auto scores = score_table(spec, probs);
  const int d = spec.dim();
  std::vector<Matrix> score_hess(static_cast<std::size_t>(n_states_));
  Matrix hess = Matrix::Zero(d, d);
  // Per step: Psi1 H - Psi2 (H - score score^T) / pi, with H = hess log pi.
  for (const Group& g : groups_) {
    if (g.psi1_sum == 0.0 && g.psi2_sum == 0.0) continue;
    auto& h = score_hess[static_cast<std::size_t>(g.state)];
    if (h.size() == 0) h = score_hessian(spec, theta, g.state, g.action);
    const Vector& sc = scores[static_cast<std::size_t>(g.state * n_actions_ + g.action)];
    const double w2 = g.psi2_sum / probs(g.state, g.action);
    hess.noalias() += (g.psi1_sum - w2) * h;
    hess.noalias() += w2 * (sc * sc.transpose());
  }
  hess /= static_cast<double>(window_);
  return hess;
}

Vector PhiFunctional::logp_score(const PolicySpec& spec, const PolicyParams& theta) const {
  const PolicyTable probs = policy_table(spec, theta);
  const auto scores = score_table(spec, probs);
  Vector out = Vector::Zero(spec.dim());
  for (const Group& g : groups_) {
    out += static_cast<double>(g.full_count) * scores[static_cast<std::size_t>(g.state * n_actions_ + g.action)];
  }
  return out;
}

PhiReport PhiFunctional::evaluate(const PolicySpec& spec, const PolicyParams& theta) const {
  PhiReport report;
  report.phi = value(spec, theta);
  report.grad = gradient(spec, theta);
  report.hess = hessian(spec, theta);
  report.psi1 = psi1_;
  report.psi2 = psi2_;
  report.logp_score = logp_score(spec, theta);
  return report;
}

Vector PhiFunctional::hessian_vector_product(const PolicySpec& spec, const PolicyParams& theta,
                                             const Vector& u) const {
  const PolicyTable probs = policy_table(spec, theta);
  const auto scores = score_table(spec, probs);
  Vector out = gradient(spec, theta) * logp_score(spec, theta).dot(u);

  std::vector<Vector> hess_u(static_cast<std::size_t>(n_states_));
  Vector acc = Vector::Zero(spec.dim());
  for (const Group& g : groups_) {
    if (g.psi1_sum == 0.0 && g.psi2_sum == 0.0) continue;
    auto& hu = hess_u[static_cast<std::size_t>(g.state)];
    if (hu.size() == 0) {
      // hess log pi(.|s) u = -J^T (pi o (J u) - pi (pi . J u))
      const Matrix jac = spec.logit_jacobian(g.state);
      const Vector pi = probs.row(g.state).transpose();
      const Vector ju = jac * u;
      const Vector w = pi.cwiseProduct(ju) - pi * pi.dot(ju);
      hu = -(jac.transpose() * w);
    }
    const Vector& sc = scores[static_cast<std::size_t>(g.state * n_actions_ + g.action)];
    const double w2 = g.psi2_sum / probs(g.state, g.action);
    acc += (g.psi1_sum - w2) * hu;
    acc += (w2 * sc.dot(u)) * sc;
  }
  out += acc / static_cast<double>(window_);
  return out;
}

PhiReport phi_report(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                     const EstimatorConfig& cfg) {
  return PhiFunctional(tau, spec.n_states(), spec.n_actions(), cfg).evaluate(spec, theta);
}

Matrix hessian_estimate(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                        const EstimatorConfig& cfg) {
  const PhiFunctional phi(tau, spec.n_states(), spec.n_actions(), cfg);
  return phi.gradient(spec, theta) * phi.logp_score(spec, theta).transpose() + phi.hessian(spec, theta);
}

Vector hessian_vector_product(const PolicySpec& spec, const PolicyParams& theta, const Trajectory& tau,
                              const EstimatorConfig& cfg, const Vector& u) {
  return PhiFunctional(tau, spec.n_states(), spec.n_actions(), cfg).hessian_vector_product(spec, theta, u);
}

double trajectory_log_likelihood(const TabularMdp& m, const PolicySpec& spec, const PolicyParams& theta,
                                 const Trajectory& tau, const Vector& rho_bar) {
  double lp = std::log(rho_bar(tau.steps.front().state));
  for (std::size_t k = 0; k < tau.steps.size(); ++k) {
    const Step& step = tau.steps[k];
    const int next = k + 1 < tau.steps.size() ? tau.steps[k + 1].state : tau.final_state;
    lp += log_prob(spec, theta, step.state, step.action);
    lp += std::log(m.transition(step.state, step.action, next));
  }
  return lp;
}

}  // namespace avgpg
