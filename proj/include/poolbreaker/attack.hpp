#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "poolbreaker/graph.hpp"
#include "poolbreaker/matrix.hpp"
#include "poolbreaker/surrogate.hpp"

namespace poolbreaker {

// Unnoticeability thresholds: edit-distance ratio, DeltaCon0 distance and
// feature L1 change, plus the DeltaCon0 attenuation factor.
struct Budget {
  double edit_ratio_max = 0.05;
  double deltacon_max = 0.25;
  double feature_l1_max = 0.05;
  double epsilon = 1e-4;
  // Use eps^2 * A instead of eps^2 * A*A for the second-order affinity term.
  bool deltacon_strict_literal = false;
};

void validate_budget(const Budget& b);

enum class AttackMode { edges_only, features_only, combined };

std::string to_string(AttackMode m);
AttackMode attack_mode_from_string(const std::string& s);

struct AttackConfig {
  AttackMode mode = AttackMode::combined;
  double target_node_fraction = 0.05;
  double max_edge_flip_fraction = 1.0;
  double feature_step_scale = 1.0;
  // Single pass over the targets, or repeated passes until nothing changes.
  bool multi_pass = false;
};

void validate_attack_config(const AttackConfig& c);

double edit_distance_ratio(const Matrix& original, const Matrix& perturbed);
double deltacon0_distance(const Matrix& original, const Matrix& perturbed, double epsilon,
                          bool strict_literal = false);
double feature_l1(const Matrix& original, const Matrix& perturbed);

BudgetUsage measure_budget(const Graph& original, const Graph& perturbed, const Budget& budget);
bool within_budget(const BudgetUsage& usage, const Budget& budget);

// Outer product of the inverse-sqrt degrees of A + I (and its element-wise
// square), frozen at the graph the gradient is taken on.
struct GradientWorkspace {
  Matrix base;        // A + I
  Vector inv_sqrt_degree;
  Matrix assist;      // d_i d_j
  Matrix assist_sq;   // (d_i d_j)^2
};

GradientWorkspace make_workspace(const Graph& graph);

// d(S_i(original) - S_i(current)) / d a_ij for every j, degrees frozen.
// Entry i is computed but never acted on.
Vector grad_score_wrt_edges(const SurrogateParams& params, const Graph& graph,
                            const GradientWorkspace& ws, std::size_t target);

// d(S_i(original) - S_i(current)) / d h_i, degrees frozen. Length D.
Vector grad_score_wrt_feature(const SurrogateParams& params, const Graph& graph,
                              const GradientWorkspace& ws, std::size_t target);

struct FlipRecord {
  std::size_t target = 0;
  std::size_t other = 0;
  bool added = false;
  double score_before = 0.0;
  double score_after = 0.0;
};

struct AttackResult {
  Graph perturbed;
  std::vector<Edit> edits;
  BudgetUsage budget_usage;
  std::vector<std::size_t> target_nodes;
  std::vector<double> score_drops;  // S_i(original) - S_i(perturbed) per target
  std::vector<FlipRecord> flips;    // exact score of the flip's target around each applied flip
  std::size_t rejected_flips = 0;   // feasible candidates rolled back for not lowering the score
};

AttackResult generate_adversarial(const SurrogateParams& params, const Graph& graph,
                                  const Budget& budget, const AttackConfig& config);

// Random edge flips on ceil(target_node_fraction * N) random nodes under the
// same budget gates: one flip per node, or in multi-pass mode repeated rounds
// until a budget or the flip cap stops it. Uses no model information.
AttackResult random_baseline_attack(const Graph& graph, const Budget& budget,
                                    const AttackConfig& config, std::uint64_t seed);

}  // namespace poolbreaker
