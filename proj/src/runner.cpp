#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "avgpg/error.hpp"
#include "avgpg/harness.hpp"
#include "avgpg/oracle.hpp"

namespace avgpg {

RunResult run_once(const ResolvedExperiment& ex, std::uint64_t seed, bool oracle_logging) {
  RunOptions options;
  options.oracle_logging = oracle_logging;
  options.optimal_gain = ex.optimal_gain;
  switch (ex.schedule.variant) {
    case Variant::Igt:
      return run_pg_igt(ex.mdp, ex.policy, ex.schedule, ex.estimator, ex.theta0, ex.theta1, seed, options);
    case Variant::Hessian:
      return run_hessian_pg(ex.mdp, ex.policy, ex.schedule, ex.estimator, ex.theta0, ex.theta1, seed, options);
    case Variant::Vanilla:
      return run_vanilla_pg(ex.mdp, ex.policy, ex.schedule, ex.estimator, ex.theta0, seed, options);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown variant");
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_trace_csv(const std::filesystem::path& path, const RunResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  out << "t,epoch,reward,instant_regret,cum_regret\n";
  const std::size_t H = static_cast<std::size_t>(std::max(1, result.H));
  std::string line;
  for (std::size_t t = 0; t < result.reward_trace.size(); ++t) {
    const double r = result.reward_trace[t];
    line.clear();
    line += std::to_string(t);
    line += ',';
    line += std::to_string(t / H + 1);
    line += ',';
    line += format_double(r);
    line += ',';
    line += format_double(result.optimal_gain - r);
    line += ',';
    line += format_double(result.regret_trace[t]);
    line += '\n';
    out << line;
  }
}

namespace {

SummaryRecord summarize(const ResolvedExperiment& ex, std::uint64_t seed, const RunResult& r, double seconds) {
  SummaryRecord s;
  s.seed = seed;
  s.final_regret = r.final_regret();
  const std::size_t n = r.reward_trace.size();
  const std::size_t window = std::max<std::size_t>(1, n / 10);
  double sum = 0.0;
  for (std::size_t t = n - std::min(n, window); t < n; ++t) sum += r.reward_trace[t];
  s.final_window_reward = n == 0 ? 0.0 : sum / static_cast<double>(std::min(n, window));
  s.optimal_gain = ex.optimal_gain;
  s.final_gain = r.gain_trace.empty() ? exact_gain(ex.mdp, ex.policy, PolicyParams{r.theta_snapshots.back()})
                                      : r.gain_trace.back();
  s.gain_gap = s.optimal_gain - s.final_gain;
  s.runtime_seconds = seconds;
  return s;
}

// Numbers go through format_double so the file is exact at 17 digits.
nlohmann::json num(double x) { return nlohmann::json::parse(format_double(x)); }

}  // namespace

nlohmann::json summary_to_json(const ResolvedExperiment& ex, const ExperimentConfig& config,
                               const std::vector<SummaryRecord>& records) {
  const StepSizes first = schedule(ex.schedule, 1);
  nlohmann::json j;
  j["algorithm"] = to_string(ex.schedule.variant);
  j["T"] = config.T;
  j["resolved"] = {{"H", ex.schedule.H},
                   {"K", ex.schedule.K},
                   {"N", ex.estimator.N},
                   {"G", num(ex.schedule.G)},
                   {"mu", num(ex.schedule.mu)},
                   {"gamma_1", num(first.gamma)},
                   {"eta_1", num(first.eta)},
                   {"t_mix", ex.t_mix},
                   {"t_hit", num(ex.t_hit)},
                   {"c_H", num(config.c_H)}};
  j["optimal_gain"] = num(ex.optimal_gain);
  j["optimal_actions"] = ex.optimal_actions;
  nlohmann::json seeds = nlohmann::json::array();
  for (const SummaryRecord& s : records) {
    seeds.push_back({{"seed", s.seed},
                     {"final_regret", num(s.final_regret)},
                     {"final_window_reward", num(s.final_window_reward)},
                     {"optimal_gain", num(s.optimal_gain)},
                     {"final_gain", num(s.final_gain)},
                     {"gain_gap", num(s.gain_gap)},
                     {"runtime_seconds", num(s.runtime_seconds)}});
  }
  j["seeds"] = seeds;
  j["config"] = config.source;
  return j;
}

namespace {

std::vector<SummaryRecord> run_experiment_in(const ExperimentConfig& config, int jobs) {
  const ResolvedExperiment ex = resolve(config);
  std::filesystem::create_directories(config.output_dir);

  const std::size_t n = config.seeds.size();
  std::vector<SummaryRecord> records(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const std::uint64_t seed = config.seeds[i];
        const auto start = std::chrono::steady_clock::now();
        const RunResult r = run_once(ex, seed, config.oracle_logging);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_trace_csv(config.output_dir / ("trace_seed_" + std::to_string(seed) + ".csv"), r);
        records[i] = summarize(ex, seed, r, secs);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(jobs, 1, static_cast<int>(n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream out(config.output_dir / "summary.json");
  out << summary_to_json(ex, config, records).dump(2) << '\n';
  return records;
}

}  // namespace

std::vector<SummaryRecord> run_experiment(const ExperimentConfig& config_in, int jobs) {
  ExperimentConfig config = config_in;
  if (const char* env = std::getenv("AVGPG_OUTPUT_DIR"); env && *env) config.output_dir = env;
  return run_experiment_in(config, jobs);
}

namespace {

// "a.b.c" addresses nested objects; a leading '/' is taken as a JSON pointer.
void set_path(nlohmann::json& doc, const std::string& key, const nlohmann::json& value) {
  if (!key.empty() && key.front() == '/') {
    doc[nlohmann::json::json_pointer(key)] = value;
    return;
  }
  nlohmann::json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

}  // namespace

nlohmann::json run_sweep(const nlohmann::json& base, const nlohmann::json& grid, int jobs) {
  if (!grid.is_object() || grid.empty()) {
    throw Error(ErrorKind::ConfigInvalid, "field 'grid': expected a nonempty object of value lists");
  }
  std::vector<std::string> keys;
  std::vector<nlohmann::json> values;
  std::size_t total = 1;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      throw Error(ErrorKind::ConfigInvalid, "field 'grid." + it.key() + "': expected a nonempty array");
    }
    keys.push_back(it.key());
    values.push_back(it.value());
    total *= it.value().size();
  }

  std::filesystem::path root = base.value("output_dir", std::string("avgpg_out"));
  if (const char* env = std::getenv("AVGPG_OUTPUT_DIR"); env && *env) root = env;

  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < total; ++i) {
    nlohmann::json doc = base;
    nlohmann::json params = nlohmann::json::object();
    std::size_t rest = i;
    for (std::size_t g = keys.size(); g-- > 0;) {
      const std::size_t m = values[g].size();
      const nlohmann::json& v = values[g][rest % m];
      rest /= m;
      set_path(doc, keys[g], v);
      params[keys[g]] = v;
    }
    const std::filesystem::path dir = root / ("sweep_" + std::to_string(i));
    doc["output_dir"] = dir.string();
    ExperimentConfig config = parse_config(doc);
    config.output_dir = dir;
    const std::vector<SummaryRecord> records = run_experiment_in(config, jobs);
    std::vector<double> regrets;
    for (const auto& r : records) regrets.push_back(r.final_regret);
    std::sort(regrets.begin(), regrets.end());
    index.push_back({{"index", i},
                     {"params", params},
                     {"output_dir", dir.string()},
                     {"median_final_regret", num(regrets[regrets.size() / 2])}});
  }
  std::filesystem::create_directories(root);
  std::ofstream out(root / "sweep.json");
  out << index.dump(2) << '\n';
  return index;
}

nlohmann::json solve_report(const TabularMdp& m) {
  const OptimalPolicy opt = optimal_gain(m);
  const PolicyTable table = opt.table(m.n_actions);
  const ChainDiagnostics chain = induced_chain(m, table);
  const AverageRewardSolution sol = evaluate_policy(m, table);
  nlohmann::json j;
  j["optimal_gain"] = num(opt.gain);
  j["optimal_actions"] = opt.actions;
  std::vector<nlohmann::json> d, v;
  for (int s = 0; s < m.n_states; ++s) {
    d.push_back(num(chain.stationary(s)));
    v.push_back(num(sol.v(s)));
  }
  j["stationary"] = d;
  j["bias"] = v;
  j["t_mix"] = chain.t_mix;
  j["t_hit"] = num(chain.t_hit);
  j["policy_iterations"] = opt.iterations;
  return j;
}

}  // namespace avgpg
