#include <cmath>
#include <fstream>
#include <string>

#include "avgpg/error.hpp"
#include "avgpg/harness.hpp"
#include "avgpg/oracle.hpp"

namespace avgpg {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::ConfigInvalid, "field '" + field + "': " + why);
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const std::string& field) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid(field, "wrong type");
  }
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) invalid("<root>", "config must be a JSON object");
  ExperimentConfig c;
  c.source = j;
  if (!j.contains("mdp")) invalid("mdp", "missing");
  c.mdp = j.at("mdp");
  if (!c.mdp.is_object()) invalid("mdp", "expected an object");
  c.policy = j.value("policy", nlohmann::json{{"kind", "tabular_softmax"}});
  if (!c.policy.is_object()) invalid("policy", "expected an object");

  const auto algorithm = optional_field<std::string>(j, "algorithm");
  if (!algorithm) invalid("algorithm", "missing");
  c.algorithm = variant_from_string(*algorithm);

  const auto T = optional_field<std::int64_t>(j, "T");
  if (!T || *T < 2) invalid("T", "expected an integer >= 2");
  c.T = *T;
  c.c_H = optional_field<double>(j, "c_H").value_or(1.0);
  if (!(c.c_H > 0.0)) invalid("c_H", "must be positive");
  c.N_override = optional_field<int>(j, "N_override");
  if (c.N_override && *c.N_override < 1) invalid("N_override", "must be >= 1");
  c.G_override = optional_field<double>(j, "G_override");
  c.mu_override = optional_field<double>(j, "mu_override");
  if (c.mu_override && !(*c.mu_override > 0.0)) invalid("mu_override", "must be positive");
  if (c.G_override && !(*c.G_override >= 0.0)) invalid("G_override", "must be nonnegative");

  if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty()) {
    invalid("seeds", "expected a nonempty array of integers");
  }
  for (const auto& s : j.at("seeds")) {
    if (!s.is_number_integer()) invalid("seeds", "expected integers");
    c.seeds.push_back(s.get<std::uint64_t>());
  }
  c.oracle_logging = optional_field<bool>(j, "oracle_logging").value_or(false);
  c.output_dir = optional_field<std::string>(j, "output_dir").value_or("avgpg_out");

  // Fail early on malformed MDP or policy sections.
  const TabularMdp m = build_mdp(c.mdp);
  policy_from_json(c.policy, m.n_states, m.n_actions);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("<file>", "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    invalid("<file>", std::string("parse error: ") + e.what());
  }
  return parse_config(j);
}

TabularMdp build_mdp(const nlohmann::json& mdp_json) {
  if (mdp_json.contains("n_states")) return mdp_from_json(mdp_json);
  const auto S = optional_field<int>(mdp_json, "S");
  const auto A = optional_field<int>(mdp_json, "A");
  if (!S || *S < 1) invalid("mdp.S", "expected a positive integer (or an inline MDP with n_states)");
  if (!A || *A < 1) invalid("mdp.A", "expected a positive integer");
  const double smoothing = optional_field<double>(mdp_json, "smoothing").value_or(0.1);
  if (!(smoothing > 0.0 && smoothing <= 1.0)) invalid("mdp.smoothing", "must lie in (0, 1]");
  const auto seed = optional_field<std::uint64_t>(mdp_json, "seed").value_or(0);
  TabularMdp m = random_ergodic_mdp(*S, *A, smoothing, seed);
  validate_mdp(m);
  return m;
}

ResolvedExperiment resolve(const ExperimentConfig& config) {
  ResolvedExperiment ex;
  ex.mdp = build_mdp(config.mdp);
  ex.policy = policy_from_json(config.policy, ex.mdp.n_states, ex.mdp.n_actions);
  ex.theta0.theta = Vector::Zero(ex.policy.dim());
  ex.theta1 = ex.theta0;

  const ChainDiagnostics chain = induced_chain(ex.mdp, policy_table(ex.policy, ex.theta0));
  ex.t_mix = chain.t_mix;
  ex.t_hit = chain.t_hit;

  ex.estimator.T = config.T;
  ex.estimator.N = config.N_override ? *config.N_override : default_burn_in(ex.t_mix, config.T);

  ScheduleSpec& sched = ex.schedule;
  sched.variant = config.algorithm;
  sched.T = config.T;
  sched.H = epoch_length(config.c_H, ex.t_mix, ex.t_hit, config.T, epoch_exponent(config.algorithm));
  if (config.algorithm == Variant::Hessian && sched.H % 2 != 0) ++sched.H;
  const int needed = config.algorithm == Variant::Hessian ? 2 * (ex.estimator.N + 1) : ex.estimator.N + 1;
  if (sched.H < needed) {
    invalid("c_H", "epoch length H = " + std::to_string(sched.H) + " must be at least " + std::to_string(needed) +
                       " for N = " + std::to_string(ex.estimator.N));
  }
  if (sched.H > config.T) invalid("T", "horizon is shorter than one epoch (H = " + std::to_string(sched.H) + ")");
  sched.K = static_cast<int>(config.T / sched.H);

  if (config.G_override) {
    sched.G = *config.G_override;
  } else {
    sched.G = estimate_bounds(ex.policy, {ex.theta0}).G;
  }
  if (config.mu_override) {
    sched.mu = *config.mu_override;
  } else {
    const double mu = fisher_and_npg(ex.mdp, ex.policy, ex.theta0).min_positive_eig;
    sched.mu = mu > 0.0 ? mu : 1.0;
  }

  const OptimalPolicy opt = optimal_gain(ex.mdp);
  ex.optimal_gain = opt.gain;
  ex.optimal_actions = opt.actions;
  return ex;
}

}  // namespace avgpg
