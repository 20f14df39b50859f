#include "avgpg/mdp.hpp"

#include <cmath>
#include <numeric>
#include <queue>
#include <string>

#include "avgpg/error.hpp"

namespace avgpg {

namespace {

constexpr double kStochasticTol = 1e-12;

std::vector<int> bfs_levels(const Matrix& chain, double tol, bool transpose) {
  const int n = static_cast<int>(chain.rows());
  std::vector<int> level(static_cast<std::size_t>(n), -1);
  std::queue<int> frontier;
  level[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v = 0; v < n; ++v) {
      const double w = transpose ? chain(v, u) : chain(u, v);
      if (w > tol && level[static_cast<std::size_t>(v)] < 0) {
        level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
        frontier.push(v);
      }
    }
  }
  return level;
}

}  // namespace

void validate_shape(const TabularMdp& m) {
  if (m.n_states < 1 || m.n_actions < 1) {
    throw Error(ErrorKind::InvalidArgument, "n_states and n_actions must be positive");
  }
  const int sa = m.n_states * m.n_actions;
  if (m.reward.rows() != m.n_states || m.reward.cols() != m.n_actions) {
    throw Error(ErrorKind::InvalidArgument, "reward must be S x A");
  }
  if (m.kernel.rows() != sa || m.kernel.cols() != m.n_states) {
    throw Error(ErrorKind::InvalidArgument, "kernel must be (S*A) x S");
  }
  if (m.init_dist.size() != m.n_states) {
    throw Error(ErrorKind::InvalidArgument, "init_dist must have length S");
  }
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      const double r = m.reward(s, a);
      if (!(r >= 0.0 && r <= 1.0)) {
        throw Error(ErrorKind::RewardOutOfRange,
                    "reward(" + std::to_string(s) + "," + std::to_string(a) + ") = " + std::to_string(r));
      }
      const auto row = m.kernel.row(m.row(s, a));
      if ((row.array() < 0.0).any() || !row.allFinite()) {
        throw Error(ErrorKind::NonStochasticRow,
                    "kernel row (" + std::to_string(s) + "," + std::to_string(a) + ") has a negative entry");
      }
      if (std::abs(row.sum() - 1.0) > kStochasticTol) {
        throw Error(ErrorKind::NonStochasticRow,
                    "kernel row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
                        std::to_string(row.sum()));
      }
    }
  }
  if ((m.init_dist.array() < 0.0).any() || std::abs(m.init_dist.sum() - 1.0) > kStochasticTol) {
    throw Error(ErrorKind::NonStochasticRow, "init_dist is not a distribution");
  }
}

void validate_mdp(const TabularMdp& m) {
  validate_shape(m);
  const PolicyTable uniform = PolicyTable::Constant(m.n_states, m.n_actions, 1.0 / m.n_actions);
  if (!is_ergodic_chain(induced_kernel(m, uniform))) {
    throw Error(ErrorKind::NotErgodic, "uniform-policy chain is reducible or periodic");
  }
}

Matrix induced_kernel(const TabularMdp& m, const PolicyTable& probs) {
  Matrix chain = Matrix::Zero(m.n_states, m.n_states);
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      chain.row(s) += probs(s, a) * m.kernel.row(m.row(s, a));
    }
  }
  return chain;
}

bool is_ergodic_chain(const Matrix& chain, double support_tol) {
  const int n = static_cast<int>(chain.rows());
  // Irreducible: (I + P)^(n-1) entrywise positive, i.e. state 0 reaches every
  // state and is reached from every state.
  const auto forward = bfs_levels(chain, support_tol, false);
  const auto backward = bfs_levels(chain, support_tol, true);
  for (int v = 0; v < n; ++v) {
    if (forward[static_cast<std::size_t>(v)] < 0 || backward[static_cast<std::size_t>(v)] < 0) return false;
  }
  // Period = gcd over edges (u, v) of level(u) + 1 - level(v).
  int period = 0;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (chain(u, v) > support_tol) {
        period = std::gcd(period, std::abs(forward[static_cast<std::size_t>(u)] + 1 -
                                           forward[static_cast<std::size_t>(v)]));
      }
    }
  }
  return period == 1;
}

Vector stationary_distribution(const Matrix& chain) {
  const int n = static_cast<int>(chain.rows());
  Matrix system = chain.transpose() - Matrix::Identity(n, n);
  system.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(system);
  if (lu.rank() < n) {
    throw Error(ErrorKind::SingularStationarySolve, "balance equations are rank deficient");
  }
  Vector d = lu.solve(rhs);
  if (!d.allFinite()) throw Error(ErrorKind::SingularStationarySolve, "non-finite stationary solution");
  return d;
}

double tv_distance(const Eigen::Ref<const Vector>& p, const Eigen::Ref<const Vector>& q) {
  return 0.5 * (p - q).lpNorm<1>();
}

double max_tv_gap(const Matrix& chain_power, const Vector& stationary) {
  double gap = 0.0;
  for (Eigen::Index s = 0; s < chain_power.rows(); ++s) {
    gap = std::max(gap, tv_distance(chain_power.row(s).transpose(), stationary));
  }
  return gap;
}

int mixing_time(const Matrix& chain, const Vector& stationary, int t_cap) {
  Matrix power = chain;
  for (int t = 1; t <= t_cap; ++t) {
    if (max_tv_gap(power, stationary) <= 0.25) return t;
    power = power * chain;
  }
  throw Error(ErrorKind::MixingCapExceeded, "TV gap above 1/4 at t_cap = " + std::to_string(t_cap));
}

double tail_sum_bound(int t_mix, double burn_in) {
  return 4.0 * t_mix / std::log(2.0) * std::exp2(-burn_in / t_mix);
}

ChainDiagnostics induced_chain(const TabularMdp& m, const PolicyTable& probs, const ChainOptions& options) {
  ChainDiagnostics out;
  out.induced_kernel = induced_kernel(m, probs);
  if (!is_ergodic_chain(out.induced_kernel)) {
    throw Error(ErrorKind::NotErgodic, "policy-induced chain is reducible or periodic");
  }
  out.stationary = stationary_distribution(out.induced_kernel);
  out.t_mix = mixing_time(out.induced_kernel, out.stationary, options.t_cap);
  out.t_hit = out.stationary.cwiseInverse().maxCoeff();
  out.tail_bound = tail_sum_bound(out.t_mix, options.tail_burn_in);
  return out;
}

StepSampler::StepSampler(const TabularMdp& m, const PolicyTable& probs)
    : n_states_(m.n_states),
      n_actions_(m.n_actions),
      action_cdf_(static_cast<std::size_t>(m.n_states * m.n_actions)),
      kernel_cdf_(static_cast<std::size_t>(m.n_states * m.n_actions * m.n_states)) {
  for (int s = 0; s < n_states_; ++s) {
    double acc = 0.0;
    for (int a = 0; a < n_actions_; ++a) {
      acc += probs(s, a);
      action_cdf_[static_cast<std::size_t>(s * n_actions_ + a)] = acc;
    }
  }
  for (int row = 0; row < n_states_ * n_actions_; ++row) {
    double acc = 0.0;
    for (int next = 0; next < n_states_; ++next) {
      acc += m.kernel(row, next);
      kernel_cdf_[static_cast<std::size_t>(row * n_states_ + next)] = acc;
    }
  }
}

int StepSampler::action(int s, Rng& rng) const {
  return rng.from_cdf(std::span<const double>(action_cdf_).subspan(static_cast<std::size_t>(s * n_actions_),
                                                                   static_cast<std::size_t>(n_actions_)));
}

int StepSampler::next_state(int s, int a, Rng& rng) const {
  const auto row = static_cast<std::size_t>((s * n_actions_ + a) * n_states_);
  return rng.from_cdf(std::span<const double>(kernel_cdf_).subspan(row, static_cast<std::size_t>(n_states_)));
}

Trajectory sample_trajectory(const TabularMdp& m, const PolicyTable& probs, int s0, int len,
                             std::int64_t start_index, Rng& rng) {
  if (len < 1) throw Error(ErrorKind::InvalidArgument, "trajectory length must be >= 1");
  const StepSampler sampler(m, probs);
  Trajectory tau;
  tau.start_index = start_index;
  tau.steps.reserve(static_cast<std::size_t>(len));
  int s = s0;
  for (int i = 0; i < len; ++i) {
    const int a = sampler.action(s, rng);
    tau.steps.push_back({s, a, m.reward(s, a)});
    s = sampler.next_state(s, a, rng);
  }
  tau.final_state = s;
  return tau;
}

Simulator::Simulator(const TabularMdp& m, std::uint64_t seed) : mdp_(&m), rng_(seed) {
  Vector cdf(m.n_states);
  double acc = 0.0;
  for (int s = 0; s < m.n_states; ++s) cdf(s) = (acc += m.init_dist(s));
  state_ = rng_.from_cdf(std::span<const double>(cdf.data(), static_cast<std::size_t>(cdf.size())));
}

Simulator::Simulator(const TabularMdp& m, int start_state, std::uint64_t seed)
    : mdp_(&m), rng_(seed), state_(start_state) {}

Trajectory Simulator::rollout(const PolicyTable& probs, int len) {
  Trajectory tau = sample_trajectory(*mdp_, probs, state_, len, time_, rng_);
  state_ = tau.final_state;
  time_ += len;
  return tau;
}

TabularMdp random_ergodic_mdp(int n_states, int n_actions, double smoothing, std::uint64_t seed) {
  if (n_states < 1 || n_actions < 1) throw Error(ErrorKind::InvalidArgument, "S and A must be >= 1");
  if (!(smoothing > 0.0 && smoothing <= 1.0)) throw Error(ErrorKind::InvalidArgument, "smoothing must lie in (0, 1]");
  Rng rng(seed);
  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.reward.resize(n_states, n_actions);
  m.kernel.resize(n_states * n_actions, n_states);
  for (int row = 0; row < n_states * n_actions; ++row) {
    Vector gamma(n_states);
    for (int j = 0; j < n_states; ++j) gamma(j) = -std::log1p(-rng.uniform());
    gamma /= gamma.sum();
    if (smoothing == 1.0) {
      m.kernel.row(row).setConstant(1.0 / n_states);
    } else {
      m.kernel.row(row) = ((1.0 - smoothing) * gamma.array() + smoothing / n_states).matrix().transpose();
      m.kernel.row(row) /= m.kernel.row(row).sum();
    }
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) m.reward(s, a) = rng.uniform();
  }
  m.init_dist = Vector::Constant(n_states, 1.0 / n_states);
  return m;
}

nlohmann::json mdp_to_json(const TabularMdp& m) {
  nlohmann::json j;
  j["n_states"] = m.n_states;
  j["n_actions"] = m.n_actions;
  auto& reward = j["reward"] = nlohmann::json::array();
  auto& kernel = j["kernel"] = nlohmann::json::array();
  for (int s = 0; s < m.n_states; ++s) {
    nlohmann::json rrow = nlohmann::json::array();
    nlohmann::json krow = nlohmann::json::array();
    for (int a = 0; a < m.n_actions; ++a) {
      rrow.push_back(m.reward(s, a));
      nlohmann::json dist = nlohmann::json::array();
      for (int next = 0; next < m.n_states; ++next) dist.push_back(m.transition(s, a, next));
      krow.push_back(std::move(dist));
    }
    reward.push_back(std::move(rrow));
    kernel.push_back(std::move(krow));
  }
  j["init_dist"] = std::vector<double>(m.init_dist.data(), m.init_dist.data() + m.init_dist.size());
  return j;
}

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::ConfigInvalid, "field '" + field + "': " + why);
}

const nlohmann::json& require(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object() || !j.contains(field)) bad_field(field, "missing");
  return j.at(field);
}

void require_array(const nlohmann::json& j, std::size_t size, const std::string& field) {
  if (!j.is_array()) bad_field(field, "expected an array");
  if (j.size() != size) {
    bad_field(field, "expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  }
}

double require_number(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number()) bad_field(field, "expected a number");
  return j.get<double>();
}

}  // namespace

TabularMdp mdp_from_json(const nlohmann::json& j) {
  TabularMdp m;
  const auto& ns = require(j, "n_states");
  const auto& na = require(j, "n_actions");
  if (!ns.is_number_integer() || ns.get<int>() < 1) bad_field("n_states", "expected a positive integer");
  if (!na.is_number_integer() || na.get<int>() < 1) bad_field("n_actions", "expected a positive integer");
  m.n_states = ns.get<int>();
  m.n_actions = na.get<int>();
  const auto S = static_cast<std::size_t>(m.n_states);
  const auto A = static_cast<std::size_t>(m.n_actions);

  const auto& reward = require(j, "reward");
  require_array(reward, S, "reward");
  m.reward.resize(m.n_states, m.n_actions);
  for (std::size_t s = 0; s < S; ++s) {
    require_array(reward[s], A, "reward");
    for (std::size_t a = 0; a < A; ++a) {
      m.reward(static_cast<int>(s), static_cast<int>(a)) = require_number(reward[s][a], "reward");
    }
  }

  const auto& kernel = require(j, "kernel");
  require_array(kernel, S, "kernel");
  m.kernel.resize(m.n_states * m.n_actions, m.n_states);
  for (std::size_t s = 0; s < S; ++s) {
    require_array(kernel[s], A, "kernel");
    for (std::size_t a = 0; a < A; ++a) {
      require_array(kernel[s][a], S, "kernel");
      for (std::size_t next = 0; next < S; ++next) {
        m.kernel(m.row(static_cast<int>(s), static_cast<int>(a)), static_cast<int>(next)) =
            require_number(kernel[s][a][next], "kernel");
      }
    }
  }

  m.init_dist = Vector::Constant(m.n_states, 1.0 / m.n_states);
  if (j.contains("init_dist")) {
    const auto& init = j.at("init_dist");
    require_array(init, S, "init_dist");
    for (std::size_t s = 0; s < S; ++s) m.init_dist(static_cast<int>(s)) = require_number(init[s], "init_dist");
  }
  validate_mdp(m);
  return m;
}

}  // namespace avgpg
