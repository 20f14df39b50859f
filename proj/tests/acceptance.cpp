// Runs the nine acceptance criteria and prints one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails.

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "avgpg/checks.hpp"

namespace {

struct Criterion {
  int id;
  const char* title;
  std::function<avgpg::CheckResult(const avgpg::CheckOptions&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "exact gradient vs finite differences", avgpg::check_oracle_gradient},
      {2, "Phi identities, Hessian-vector product", avgpg::check_phi_identities},
      {3, "advantage estimate bias and MSE", avgpg::check_advantage_statistics},
      {4, "gradient estimate bias and MSE", avgpg::check_gradient_statistics},
      {5, "Hessian estimate symmetry and derivative match", avgpg::check_hessian_statistics},
      {6, "approximate smoothness", avgpg::check_smoothness},
      {7, "optimizer structure", avgpg::check_structure},
      {8, "regret comparison", avgpg::check_regret_comparison},
      {9, "mixing and tail bounds", avgpg::check_mixing},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    avgpg::CheckResult r;
    try {
      r = c.run({});
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %d: %s  %s | %s [%.1fs]\n", c.id, r.passed ? "PASS" : "FAIL", c.title, r.detail.c_str(),
                r.seconds);
    std::fflush(stdout);
    failed += r.passed ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
