#pragma once

// Verification suites: finite-difference checks, estimator identities,
// Monte-Carlo bias/variance statistics, structural checks on optimizer runs,
// mixing diagnostics and a small regret comparison. Used by `avgpg check`
// and by the acceptance test binary.

#include <functional>
#include <string>
#include <vector>

#include "avgpg/mdp.hpp"

namespace avgpg {

enum class CheckLevel { Fast, Full };

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // measured statistics
  double seconds = 0.0;
};

struct CheckOptions {
  /// Applied to the Phi Hessian before it is compared with finite
  /// differences. Only used by tests to make sure the comparison can fail.
  std::function<Matrix(const Matrix&)> hessian_mutation;
};

CheckResult check_oracle_gradient(const CheckOptions& options = {});
CheckResult check_phi_identities(const CheckOptions& options = {});
CheckResult check_advantage_statistics(const CheckOptions& options = {});
CheckResult check_gradient_statistics(const CheckOptions& options = {});
CheckResult check_hessian_statistics(const CheckOptions& options = {});
CheckResult check_smoothness(const CheckOptions& options = {});
CheckResult check_structure(const CheckOptions& options = {});
CheckResult check_regret_comparison(const CheckOptions& options = {});
CheckResult check_mixing(const CheckOptions& options = {});

// Smaller property suites run by `avgpg check`.
CheckResult check_policy_derivatives(const CheckOptions& options = {});
CheckResult check_poisson_solutions(const CheckOptions& options = {});
CheckResult check_performance_difference(const CheckOptions& options = {});
CheckResult check_gradient_domination(const CheckOptions& options = {});

struct NamedCheck {
  std::string name;
  std::function<CheckResult(const CheckOptions&)> run;
  bool monte_carlo = false;
};

/// Every suite, in the order `avgpg check` runs them.
std::vector<NamedCheck> all_checks();

/// Runs the suites selected by `level`; `on_result` sees each result as soon
/// as it is available.
std::vector<CheckResult> run_checks(CheckLevel level, const CheckOptions& options = {},
                                    const std::function<void(const CheckResult&)>& on_result = {});

std::string format_check_line(const CheckResult& r);

}  // namespace avgpg
