#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace poolbreaker {

struct GradientCheckSummary {
  std::size_t graphs = 0;
  std::size_t entries = 0;
  double max_rel_error_edges = 0.0;
  double max_rel_error_features = 0.0;
};

// Compares the closed-form score gradients against central differences of
// the score with degrees held at their unperturbed values, on random graphs
// with N in [3, 10] and edge probability 0.5. Relative error uses an absolute
// floor of 1e-6 in the denominator.
GradientCheckSummary check_score_gradients(std::size_t graphs, std::uint64_t seed, double step = 1e-5);

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Gradient checks plus small closed-form metric fixtures.
std::vector<SelftestLine> run_selftest(std::uint64_t seed = 0);

}  // namespace poolbreaker
