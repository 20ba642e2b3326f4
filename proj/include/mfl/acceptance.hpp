#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mfl {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
  double limit_seconds = 0.0;
};

/// Ids of the acceptance criteria, in order.
std::vector<int> criterion_ids();

/// Runs one criterion; the runtime limit is part of passing.
CriterionResult run_criterion(int id);

/// One "PASS|FAIL|SKIP [id] name: detail (seconds)" line.
std::string format_line(const CriterionResult& result);

/// Runs the given criteria (all when empty), printing one line per criterion as it finishes.
std::vector<CriterionResult> run_acceptance(const std::vector<int>& ids, std::ostream& out);

}  // namespace mfl
