#pragma once

#include <functional>
#include <string>
#include <vector>

namespace kronsketch::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::vector<Check> checks;
  [[nodiscard]] bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

/// Reduced-size invariant suite over every module; used by the CLI's
/// selftest subcommand.
Report run_all();

/// Sanity of a theta_p lookup (endpoints, monotonicity, range). Exposed with
/// an injectable lookup so corruption detection itself is testable.
Check check_theta_values(const std::function<double(double)>& theta);

std::string to_json(const Report& report);

}  // namespace kronsketch::selftest
