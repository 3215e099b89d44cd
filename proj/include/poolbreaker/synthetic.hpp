#pragma once

#include <cstddef>
#include <cstdint>

#include "poolbreaker/graph.hpp"

namespace poolbreaker {

// Cycles (label 0) versus stars (label 1), balanced, with node ids shuffled.
// The plain variant carries one constant feature per node. The attributed
// variant appends `feature_dim - 1` Gaussian features whose mean is
// +/- `feature_signal` depending on the class.
struct SyntheticOptions {
  std::size_t graphs = 100;
  std::size_t min_nodes = 12;
  std::size_t max_nodes = 24;
  bool attributed = false;
  std::size_t feature_dim = 3;
  double feature_signal = 0.5;
  double feature_noise = 1.0;
  // Chance of each extra chord (cycles) or leaf-leaf edge (stars).
  double extra_edge_prob = 0.1;
  // Append each node's degree (scaled by 1/degree_scale) as a feature.
  bool degree_feature = false;
  double degree_scale = 4.0;
  std::uint64_t seed = 0;
};

Dataset make_synthetic(const SyntheticOptions& options);

}  // namespace poolbreaker
