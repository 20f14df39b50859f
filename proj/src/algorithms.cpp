#include "avgpg/algorithms.hpp"

#include <cmath>
#include <string>

#include "avgpg/error.hpp"
#include "avgpg/oracle.hpp"

namespace avgpg {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Igt: return "igt";
    case Variant::Hessian: return "hessian";
    case Variant::Vanilla: return "vanilla";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  if (name == "igt") return Variant::Igt;
  if (name == "hessian") return Variant::Hessian;
  if (name == "vanilla") return Variant::Vanilla;
  throw Error(ErrorKind::ConfigInvalid, "field 'algorithm': unknown algorithm '" + name + "'");
}

double epoch_exponent(Variant v) { return v == Variant::Igt ? 1.0 / 6.0 : 0.0; }

int epoch_length(double c_H, int t_mix, double t_hit, std::int64_t T, double exponent) {
  const double log_t = std::log2(static_cast<double>(T));
  const double h = c_H * t_mix * t_hit * log_t * log_t * std::pow(static_cast<double>(T), exponent);
  return std::max(1, static_cast<int>(std::ceil(h)));
}

StepSizes schedule(const ScheduleSpec& spec, int k) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "epoch index starts at 1");
  StepSizes out;
  out.gamma = 6.0 * spec.G / (spec.mu * (k + 2));
  const double base = 2.0 / (k + 2);
  out.eta = spec.variant == Variant::Igt ? std::pow(base, 0.8) : base;
  return out;
}

namespace {

class RunLog {
 public:
  RunLog(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched, const RunOptions& options)
      : mdp_(m), spec_(spec), options_(options) {
    result_.optimal_gain = options.optimal_gain ? *options.optimal_gain : optimal_gain(m).gain;
    result_.H = sched.H;
    result_.K = sched.K;
    result_.reward_trace.reserve(static_cast<std::size_t>(sched.H) * static_cast<std::size_t>(sched.K));
    result_.regret_trace.reserve(result_.reward_trace.capacity());
  }

  void record_steps(const Trajectory& tau) {
    double cum = result_.regret_trace.empty() ? 0.0 : result_.regret_trace.back();
    for (const Step& step : tau.steps) {
      result_.reward_trace.push_back(step.reward);
      cum += result_.optimal_gain - step.reward;
      result_.regret_trace.push_back(cum);
    }
  }

  void record_theta(const Vector& theta) {
    result_.theta_snapshots.push_back(theta);
    if (options_.oracle_logging) result_.gain_trace.push_back(exact_gain(mdp_, spec_, PolicyParams{theta}));
  }

  void record_epoch(EpochRecord rec) {
    result_.direction_norms.push_back(rec.direction.norm());
    result_.estimator_stats.push_back(rec.stats);
    result_.epochs.push_back(std::move(rec));
  }

  RunResult take() { return std::move(result_); }

 private:
  const TabularMdp& mdp_;
  const PolicySpec& spec_;
  RunOptions options_;
  RunResult result_;
};

Vector normalized_step(const Vector& theta, const Vector& direction, double gamma) {
  const double norm = direction.norm();
  if (norm == 0.0) return theta;
  return theta + gamma * (direction / norm);
}

void check_dims(const PolicySpec& spec, const PolicyParams& theta) {
  if (theta.dim() != spec.dim()) throw Error(ErrorKind::InvalidArgument, "initial theta has the wrong dimension");
}

}  // namespace

RunResult run_pg_igt(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched,
                     const EstimatorConfig& cfg, const PolicyParams& theta0, const PolicyParams& theta1,
                     std::uint64_t seed, const RunOptions& options) {
  if (sched.H <= cfg.N) throw Error(ErrorKind::EpochTooShort, "H must exceed N");
  check_dims(spec, theta0);
  check_dims(spec, theta1);
  RunLog log(m, spec, sched, options);
  Simulator sim(m, seed);

  Vector theta_prev = theta0.theta;
  Vector theta = theta1.theta;
  Vector direction = Vector::Zero(spec.dim());
  log.record_theta(theta);
  for (int k = 1; k <= sched.K; ++k) {
    EpochRecord rec;
    rec.k = k;
    rec.step = schedule(sched, k);
    const double eta = rec.step.eta;
    rec.theta_prev = theta_prev;
    rec.theta = theta;
    rec.theta_eval = theta + ((1.0 - eta) / eta) * (theta - theta_prev);

    const PolicyParams look_ahead{rec.theta_eval};
    const Trajectory tau = sim.rollout(policy_table(spec, look_ahead), sched.H);
    log.record_steps(tau);
    rec.gradient = grad_estimate(spec, look_ahead, tau, cfg);
    rec.stats = estimator_stats(tau, m.n_states, m.n_actions, cfg);

    rec.direction_prev = direction;
    direction = (1.0 - eta) * direction + eta * rec.gradient;
    rec.direction = direction;
    rec.theta_next = normalized_step(theta, direction, rec.step.gamma);

    theta_prev = theta;
    theta = rec.theta_next;
    log.record_theta(theta);
    log.record_epoch(std::move(rec));
  }
  return log.take();
}

RunResult run_hessian_pg(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched,
                         const EstimatorConfig& cfg, const PolicyParams& theta0, const PolicyParams& theta1,
                         std::uint64_t seed, const RunOptions& options) {
  if (sched.H % 2 != 0) throw Error(ErrorKind::EpochTooShort, "H must be even");
  if (sched.H / 2 <= cfg.N) throw Error(ErrorKind::EpochTooShort, "H/2 must exceed N");
  check_dims(spec, theta0);
  check_dims(spec, theta1);
  RunLog log(m, spec, sched, options);
  Simulator sim(m, seed);
  const int half = sched.H / 2;

  Vector theta_prev = theta0.theta;
  Vector theta = theta1.theta;
  Vector direction = Vector::Zero(spec.dim());
  log.record_theta(theta);
  for (int k = 1; k <= sched.K; ++k) {
    EpochRecord rec;
    rec.k = k;
    rec.step = schedule(sched, k);
    const double eta = rec.step.eta;
    rec.theta_prev = theta_prev;
    rec.theta = theta;
    rec.q = sim.rng().uniform();
    rec.theta_eval = rec.q * theta + (1.0 - rec.q) * theta_prev;

    const PolicyParams current{theta};
    const PolicyParams interpolated{rec.theta_eval};
    const Trajectory tau = sim.rollout(policy_table(spec, current), half);
    log.record_steps(tau);
    const Trajectory tau_hat = sim.rollout(policy_table(spec, interpolated), half);
    log.record_steps(tau_hat);

    rec.gradient = grad_estimate(spec, current, tau, cfg);
    rec.correction = hessian_vector_product(spec, interpolated, tau_hat, cfg, theta - theta_prev);
    rec.stats = estimator_stats(tau, m.n_states, m.n_actions, cfg);

    rec.direction_prev = direction;
    direction = (1.0 - eta) * (direction + rec.correction) + eta * rec.gradient;
    rec.direction = direction;
    rec.theta_next = normalized_step(theta, direction, rec.step.gamma);

    theta_prev = theta;
    theta = rec.theta_next;
    log.record_theta(theta);
    log.record_epoch(std::move(rec));
  }
  return log.take();
}

RunResult run_vanilla_pg(const TabularMdp& m, const PolicySpec& spec, const ScheduleSpec& sched,
                         const EstimatorConfig& cfg, const PolicyParams& theta0, std::uint64_t seed,
                         const RunOptions& options) {
  if (sched.H <= cfg.N) throw Error(ErrorKind::EpochTooShort, "H must exceed N");
  check_dims(spec, theta0);
  RunLog log(m, spec, sched, options);
  Simulator sim(m, seed);

  Vector theta = theta0.theta;
  log.record_theta(theta);
  for (int k = 1; k <= sched.K; ++k) {
    EpochRecord rec;
    rec.k = k;
    rec.step = schedule(sched, k);
    rec.theta_prev = theta;
    rec.theta = theta;
    rec.theta_eval = theta;
    const PolicyParams current{theta};
    const Trajectory tau = sim.rollout(policy_table(spec, current), sched.H);
    log.record_steps(tau);
    rec.gradient = grad_estimate(spec, current, tau, cfg);
    rec.stats = estimator_stats(tau, m.n_states, m.n_actions, cfg);
    rec.direction_prev = Vector::Zero(spec.dim());
    rec.direction = rec.gradient;
    rec.theta_next = theta + rec.step.gamma * rec.gradient;
    theta = rec.theta_next;
    log.record_theta(theta);
    log.record_epoch(std::move(rec));
  }
  return log.take();
}

}  // namespace avgpg
