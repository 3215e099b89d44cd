#include "poolbreaker/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/numerics.hpp"
#include "poolbreaker/random.hpp"

namespace poolbreaker {

void validate_budget(const Budget& b) {
  if (!(b.edit_ratio_max >= 0.0)) throw ConfigError("budget.edit", "must be >= 0");
  if (!(b.deltacon_max >= 0.0)) throw ConfigError("budget.deltacon", "must be >= 0");
  if (!(b.feature_l1_max >= 0.0)) throw ConfigError("budget.feat", "must be >= 0");
  if (!(b.epsilon > 0.0)) throw ConfigError("budget.epsilon", "must be > 0");
}

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::edges_only: return "edges";
    case AttackMode::features_only: return "features";
    case AttackMode::combined: return "combined";
  }
  return "combined";
}

AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "edges" || s == "edges-only") return AttackMode::edges_only;
  if (s == "features" || s == "features-only") return AttackMode::features_only;
  if (s == "combined") return AttackMode::combined;
  throw ConfigError("attack.mode", "unknown mode '" + s + "' (expected edges, features or combined)");
}

void validate_attack_config(const AttackConfig& c) {
  auto fraction = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field, "must lie in [0, 1]");
  };
  fraction(c.target_node_fraction, "attack.target_frac");
  fraction(c.max_edge_flip_fraction, "attack.max_edge_flip_frac");
  if (!std::isfinite(c.feature_step_scale)) throw ConfigError("attack.feature_step_scale", "must be finite");
}

double edit_distance_ratio(const Matrix& original, const Matrix& perturbed) {
  require_same_shape(original, perturbed, "edit distance");
  const double n = static_cast<double>(original.rows());
  if (n == 0.0) return 0.0;
  return l1_distance(original, perturbed) / (n * n);
}

namespace {

Matrix affinity(const Matrix& a, double epsilon, bool strict_literal) {
  const std::size_t n = a.rows();
  const Matrix second = strict_literal ? a : matmul(a, a);
  Matrix s(n, n);
  const double e2 = epsilon * epsilon;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s(i, j) = (i == j ? 1.0 : 0.0) + epsilon * a(i, j) + e2 * second(i, j);
  return s;
}

}  // namespace

double deltacon0_distance(const Matrix& original, const Matrix& perturbed, double epsilon,
                          bool strict_literal) {
  require_same_shape(original, perturbed, "deltacon0");
  if (original.rows() != original.cols()) throw StructuralError("deltacon0: adjacency must be square");
  if (!(epsilon > 0.0)) throw StructuralError("deltacon0: epsilon must be positive");
  const Matrix s0 = affinity(original, epsilon, strict_literal);
  const Matrix s1 = affinity(perturbed, epsilon, strict_literal);
  double acc = 0.0;
  auto a = s0.values();
  auto b = s1.values();
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = std::sqrt(a[k]) - std::sqrt(b[k]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

double feature_l1(const Matrix& original, const Matrix& perturbed) {
  require_same_shape(original, perturbed, "feature l1");
  return l1_distance(original, perturbed);
}

BudgetUsage measure_budget(const Graph& original, const Graph& perturbed, const Budget& budget) {
  return {edit_distance_ratio(original.adjacency, perturbed.adjacency),
          deltacon0_distance(original.adjacency, perturbed.adjacency, budget.epsilon,
                             budget.deltacon_strict_literal),
          feature_l1(original.features, perturbed.features)};
}

bool within_budget(const BudgetUsage& u, const Budget& b) {
  return u.edit_ratio <= b.edit_ratio_max && u.deltacon <= b.deltacon_max &&
         u.feature_l1 <= b.feature_l1_max;
}

GradientWorkspace make_workspace(const Graph& graph) {
  const auto norm = normalize_adjacency(graph.adjacency);
  const std::size_t n = graph.node_count();
  GradientWorkspace ws;
  ws.base = norm.base;
  ws.inv_sqrt_degree = norm.inv_sqrt_degree;
  ws.assist = Matrix(n, n);
  ws.assist_sq = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = ws.inv_sqrt_degree[i] * ws.inv_sqrt_degree[j];
      ws.assist(i, j) = v;
      ws.assist_sq(i, j) = v * v;
    }
  return ws;
}

namespace {

void check_workspace(const Graph& graph, const GradientWorkspace& ws, std::size_t target) {
  const std::size_t n = graph.node_count();
  if (ws.base.rows() != n || ws.assist.rows() != n || ws.inv_sqrt_degree.size() != n)
    throw StructuralError("gradient workspace does not match the graph");
  if (target >= n) throw StructuralError("target node out of range");
}

}  // namespace

Vector grad_score_wrt_edges(const SurrogateParams& params, const Graph& graph,
                            const GradientWorkspace& ws, std::size_t target) {
  check_workspace(graph, ws, target);
  if (graph.feature_dim() != params.input_dim()) throw StructuralError("feature dim mismatch");
  const std::size_t n = graph.node_count();
  const std::size_t f = params.hidden_f();
  const std::size_t i = target;

  const Matrix hw = matmul(graph.features, params.W);  // N x F
  // K_j H W with K_j = (assist row j) o (base row j): one row of N(A) H W.
  Matrix normalized(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) normalized(r, c) = ws.assist(r, c) * ws.base(r, c);
  const Matrix khw = matmul(normalized, hw);

  const double di = ws.inv_sqrt_degree[i];
  const double self = ws.base(i, i) * di * di;
  Vector grad(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double dij = di * ws.inv_sqrt_degree[j];
    double acc = 0.0;
    for (std::size_t c = 0; c < f; ++c)
      acc += params.theta(c, 0) * (dij * khw(j, c) + self * dij * hw(j, c));
    grad[j] = -acc;
  }
  return grad;
}

Vector grad_score_wrt_feature(const SurrogateParams& params, const Graph& graph,
                              const GradientWorkspace& ws, std::size_t target) {
  check_workspace(graph, ws, target);
  if (graph.feature_dim() != params.input_dim()) throw StructuralError("feature dim mismatch");
  const std::size_t n = graph.node_count();
  const std::size_t i = target;
  // assist_sq row i times (A row i o A column i) collapses to one scalar.
  double c = 0.0;
  for (std::size_t j = 0; j < n; ++j) c += ws.assist_sq(i, j) * ws.base(i, j) * ws.base(j, i);
  const Vector w_theta = matvec(params.W, Vector(params.theta.values().begin(), params.theta.values().end()));
  Vector grad(w_theta.size());
  for (std::size_t d = 0; d < grad.size(); ++d) grad[d] = -c * w_theta[d];
  return grad;
}

namespace {

std::size_t fraction_count(double fraction, std::size_t total) {
  if (fraction <= 0.0 || total == 0) return 0;
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9));
}

Vector scores_of(const SurrogateParams& params, const Graph& g) { return score_nodes(params, g).second; }

class GradientAttack {
 public:
  GradientAttack(const SurrogateParams& params, const Graph& graph, const Budget& budget,
                 const AttackConfig& config)
      : params_(params), original_(graph), budget_(budget), config_(config) {}

  AttackResult run() {
    AttackResult result;
    result.perturbed = original_;
    current_ = &result.perturbed;
    result_ = &result;

    original_scores_ = scores_of(params_, original_);
    attacked_.assign(original_.node_count(), false);
    const auto kept = select_topk(original_scores_, params_.pool_ratio);
    const std::size_t wanted = std::max<std::size_t>(1, fraction_count(config_.target_node_fraction, original_.node_count()));
    result.target_nodes.assign(kept.begin(), kept.begin() + std::min(wanted, kept.size()));

    const bool budget_is_zero = budget_.edit_ratio_max <= 0.0 && budget_.deltacon_max <= 0.0 &&
                                budget_.feature_l1_max <= 0.0;
    edges_enabled_ = config_.mode != AttackMode::features_only && !budget_is_zero;
    features_enabled_ = config_.mode != AttackMode::edges_only && budget_.feature_l1_max > 0.0;
    flip_cap_ = config_.max_edge_flip_fraction >= 1.0
                    ? std::numeric_limits<std::size_t>::max()
                    : fraction_count(config_.max_edge_flip_fraction, original_.edge_count());

    const std::size_t max_passes = config_.multi_pass ? kMaxPasses : 1;
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
      bool changed = false;
      for (std::size_t t : result.target_nodes) {
        if (edges_enabled_ && flips_ < flip_cap_) changed |= edge_step(t);
        if (features_enabled_) changed |= feature_step(t);
      }
      if (!changed) break;
    }

    const Vector final_scores = scores_of(params_, result.perturbed);
    for (std::size_t t : result.target_nodes) result.score_drops.push_back(original_scores_[t] - final_scores[t]);
    result.budget_usage = measure_budget(original_, result.perturbed, budget_);
    return result;
  }

 private:
  static constexpr std::size_t kMaxPasses = 64;

  bool edge_step(std::size_t t) {
    const Graph& g = *current_;
    const GradientWorkspace ws = make_workspace(g);
    const Vector grad = grad_score_wrt_edges(params_, g, ws, t);
    const Vector before = scores_of(params_, g);

    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < g.node_count(); ++j)
      if (j != t) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(grad[a]) > std::abs(grad[b]);
    });

    for (std::size_t j : order) {
      const bool present = g.adjacency(t, j) != 0.0;
      const bool feasible = (!present && grad[j] > 0.0) || (present && grad[j] < 0.0);
      if (!feasible) continue;

      Graph candidate = g;
      Edit edit{present ? EditKind::edge_delete : EditKind::edge_add, t, j, std::nullopt};
      apply_edit(candidate, edit);
      const double ratio = edit_distance_ratio(original_.adjacency, candidate.adjacency);
      const double dc = deltacon0_distance(original_.adjacency, candidate.adjacency, budget_.epsilon,
                                           budget_.deltacon_strict_literal);
      if (ratio > budget_.edit_ratio_max || dc > budget_.deltacon_max) {
        // Edge search ends for good; feature steps keep their own budget.
        edges_enabled_ = false;
        return false;
      }
      const Vector after = scores_of(params_, candidate);
      if (!(after[t] < before[t]) || after[t] > original_scores_[t] || raises_attacked(after)) {
        ++result_->rejected_flips;
        continue;
      }
      attacked_[t] = true;
      result_->flips.push_back({t, j, !present, before[t], after[t]});
      result_->edits.push_back(std::move(edit));
      *current_ = std::move(candidate);
      ++flips_;
      return true;
    }
    return false;
  }

  // True if a node that already carries an edit would end above its
  // original score.
  bool raises_attacked(const Vector& scores) const {
    for (std::size_t u = 0; u < scores.size(); ++u)
      if (attacked_[u] && scores[u] > original_scores_[u]) return true;
    return false;
  }

  bool feature_step(std::size_t t) {
    Graph& g = *current_;
    const GradientWorkspace ws = make_workspace(g);
    Vector step = grad_score_wrt_feature(params_, g, ws, t);
    for (double& v : step) v *= config_.feature_step_scale;
    const double norm = std::accumulate(step.begin(), step.end(), 0.0,
                                        [](double acc, double v) { return acc + std::abs(v); });
    if (norm == 0.0) return false;
    const double used = feature_l1(original_.features, g.features);
    const double remaining = budget_.feature_l1_max - used;
    if (remaining <= 0.0) return false;
    if (norm > remaining) {
      for (double& v : step) v *= remaining / norm;
    }
    // Land on or inside the boundary despite rounding.
    Edit edit{EditKind::feature_update, t, std::nullopt, step};
    for (int attempt = 0; attempt < 64; ++attempt) {
      Graph candidate = g;
      apply_edit(candidate, edit);
      if (feature_l1(original_.features, candidate.features) <= budget_.feature_l1_max) {
        const Vector after = scores_of(params_, candidate);
        if (after[t] > original_scores_[t] || raises_attacked(after)) return false;
        attacked_[t] = true;
        result_->edits.push_back(std::move(edit));
        g = std::move(candidate);
        return true;
      }
      for (double& v : *edit.delta) v *= 1.0 - 1e-12 * static_cast<double>(1 << std::min(attempt, 30));
    }
    return false;
  }

  const SurrogateParams& params_;
  const Graph& original_;
  const Budget& budget_;
  const AttackConfig& config_;

  Graph* current_ = nullptr;
  AttackResult* result_ = nullptr;
  Vector original_scores_;
  std::vector<bool> attacked_;
  bool edges_enabled_ = false;
  bool features_enabled_ = false;
  std::size_t flips_ = 0;
  std::size_t flip_cap_ = 0;
};

}  // namespace

AttackResult generate_adversarial(const SurrogateParams& params, const Graph& graph,
                                  const Budget& budget, const AttackConfig& config) {
  validate_params(params);
  validate_budget(budget);
  validate_attack_config(config);
  if (!params.all_finite()) throw PreconditionError("surrogate parameters are not finite");
  if (graph.node_count() == 0) throw PreconditionError("cannot attack an empty graph");
  validate_graph(graph);
  return GradientAttack(params, graph, budget, config).run();
}

AttackResult random_baseline_attack(const Graph& graph, const Budget& budget,
                                    const AttackConfig& config, std::uint64_t seed) {
  validate_budget(budget);
  validate_attack_config(config);
  if (graph.node_count() == 0) throw PreconditionError("cannot attack an empty graph");
  validate_graph(graph);

  const std::size_t n = graph.node_count();
  Rng rng(seed);
  AttackResult result;
  result.perturbed = graph;

  std::vector<std::size_t> nodes(n);
  std::iota(nodes.begin(), nodes.end(), 0);
  rng.shuffle(nodes);
  const std::size_t wanted = std::min(n, std::max<std::size_t>(1, fraction_count(config.target_node_fraction, n)));
  result.target_nodes.assign(nodes.begin(), nodes.begin() + wanted);

  const std::size_t cap = config.max_edge_flip_fraction >= 1.0
                              ? std::numeric_limits<std::size_t>::max()
                              : fraction_count(config.max_edge_flip_fraction, graph.edge_count());
  // Multi-pass keeps cycling over the chosen nodes so the flip count can match
  // what the gradient attack spends under the same budget.
  std::size_t flips = 0;
  bool open = config.mode != AttackMode::features_only && n >= 2;
  const std::size_t passes = config.multi_pass ? n * n : 1;
  for (std::size_t pass = 0; pass < passes && open; ++pass) {
    for (std::size_t t : result.target_nodes) {
      if (flips >= cap) {
        open = false;
        break;
      }
      std::size_t j = rng.below(n - 1);
      if (j >= t) ++j;
      Graph candidate = result.perturbed;
      const bool present = candidate.adjacency(t, j) != 0.0;
      // Undoing an earlier flip would waste budget accounting; skip such draws.
      if (present != (graph.adjacency(t, j) != 0.0)) continue;
      Edit edit{present ? EditKind::edge_delete : EditKind::edge_add, t, j, std::nullopt};
      apply_edit(candidate, edit);
      const BudgetUsage usage = measure_budget(graph, candidate, budget);
      if (usage.edit_ratio > budget.edit_ratio_max || usage.deltacon > budget.deltacon_max) {
        open = false;
        break;
      }
      result.flips.push_back({t, j, !present, 0.0, 0.0});
      result.edits.push_back(std::move(edit));
      result.perturbed = std::move(candidate);
      ++flips;
    }
  }
  result.score_drops.assign(result.target_nodes.size(), 0.0);
  result.budget_usage = measure_budget(graph, result.perturbed, budget);
  return result;
}

}  // namespace poolbreaker
