#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "poolbreaker/attack.hpp"
#include "poolbreaker/errors.hpp"
#include "poolbreaker/random.hpp"

using namespace poolbreaker;

namespace {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

Graph graph_of(std::size_t n, const EdgeList& edges, Matrix features) {
  return make_graph(n, edges, std::move(features), 0);
}

Graph random_graph(Rng& rng, std::size_t n, std::size_t d, double p) {
  EdgeList edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  Matrix x(n, d);
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  return graph_of(n, edges, std::move(x));
}

SurrogateParams random_params(Rng& rng, std::size_t d, std::size_t f = 4) {
  SurrogateParams p;
  p.W = Matrix(d, f);
  p.theta = Matrix(f, 1);
  p.V1 = Matrix(f, 3);
  p.V2 = Matrix(3, 2);
  p.b1 = Matrix(1, 3);
  p.b2 = Matrix(1, 2);
  for (Matrix* m : p.tensors())
    for (double& v : m->values()) v = rng.uniform(-1.0, 1.0);
  return p;
}

// S_i evaluated from an explicit (A + I) with the inverse-sqrt degrees held fixed.
double frozen_score(const SurrogateParams& p, const Matrix& base, const Vector& d, const Matrix& h, std::size_t i) {
  const std::size_t n = base.rows(), f = p.hidden_f();
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double nij = d[i] * base(i, j) * d[j];
    if (nij == 0.0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const double njk = d[j] * base(j, k) * d[k];
      if (njk == 0.0) continue;
      for (std::size_t e = 0; e < h.cols(); ++e)
        for (std::size_t c = 0; c < f; ++c) s += nij * njk * h(k, e) * p.W(e, c) * p.theta(c, 0);
    }
  }
  return s;
}

Vector inv_sqrt_degrees(const Graph& g) {
  Vector d(g.node_count());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double deg = 1.0;
    for (double v : g.adjacency.row(i)) deg += v;
    d[i] = 1.0 / std::sqrt(deg);
  }
  return d;
}

Matrix with_loops(const Graph& g) {
  Matrix b = g.adjacency;
  for (std::size_t i = 0; i < b.rows(); ++i) b(i, i) = 1.0;
  return b;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Budget loose_budget() {
  Budget b;
  b.edit_ratio_max = 1.0;
  b.deltacon_max = 1e9;
  b.feature_l1_max = 1e9;
  return b;
}

}  // namespace

TEST(Budgets, EditDistanceRatio) {
  const Graph g = graph_of(4, {{0, 1}, {1, 2}}, Matrix(4, 1, 1.0));
  Graph h = g;
  EXPECT_EQ(edit_distance_ratio(g.adjacency, h.adjacency), 0.0);
  apply_edit(h, {EditKind::edge_add, 0, 3, std::nullopt});
  EXPECT_DOUBLE_EQ(edit_distance_ratio(g.adjacency, h.adjacency), 0.125);
  Graph big = graph_of(10, {}, Matrix(10, 1, 1.0));
  Graph big2 = big;
  for (std::size_t k = 0; k < 3; ++k) apply_edit(big2, {EditKind::edge_add, k, k + 5, std::nullopt});
  EXPECT_DOUBLE_EQ(edit_distance_ratio(big.adjacency, big2.adjacency), 0.06);
  EXPECT_THROW(edit_distance_ratio(Matrix(2, 2), Matrix(3, 3)), StructuralError);
}

TEST(Budgets, FeatureL1) {
  const Matrix a{{0.0, 1.0}, {2.0, 3.0}};
  Matrix b = a;
  EXPECT_EQ(feature_l1(a, b), 0.0);
  b(0, 1) += 0.3;
  EXPECT_NEAR(feature_l1(a, b), 0.3, 1e-15);
  b = a;
  b(0, 0) += 0.2;
  b(1, 1) -= 0.2;
  EXPECT_NEAR(feature_l1(a, b), 0.4, 1e-15);
  EXPECT_THROW(feature_l1(a, Matrix(2, 3)), StructuralError);
}

TEST(Budgets, DeltaConTwoNodeExpansion) {
  const Matrix edge{{0, 1}, {1, 0}};
  const Matrix empty(2, 2);
  for (double eps : {1e-4, 1e-2, 0.3}) {
    // S(edge) = [[1 + e^2, e], [e, 1 + e^2]] since A*A = I; S(empty) = I.
    const double diag = std::sqrt(1.0 + eps * eps) - 1.0;
    const double off = std::sqrt(eps);
    const double expect = std::sqrt(2.0 * diag * diag + 2.0 * off * off);
    EXPECT_NEAR(deltacon0_distance(edge, empty, eps), expect, 1e-15);
    EXPECT_NEAR(deltacon0_distance(empty, edge, eps), expect, 1e-15);
    // Literal second-order term eps^2 * A: off-diagonal e + e^2, diagonal untouched.
    EXPECT_NEAR(deltacon0_distance(edge, empty, eps, true), std::sqrt(2.0 * (eps + eps * eps)), 1e-15);
  }
  EXPECT_EQ(deltacon0_distance(edge, edge, 1e-4), 0.0);
  double last = std::numeric_limits<double>::infinity();
  for (double eps : {1e-2, 1e-4, 1e-8, 1e-12}) {
    const double v = deltacon0_distance(edge, empty, eps);
    EXPECT_LT(v, last);
    last = v;
  }
  EXPECT_LT(last, 2e-6);
  EXPECT_THROW(deltacon0_distance(edge, empty, -1.0), StructuralError);
}

TEST(Budgets, ValidationNamesField) {
  Budget b;
  b.edit_ratio_max = -0.1;
  try {
    validate_budget(b);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "budget.edit");
  }
  AttackConfig c;
  c.target_node_fraction = 2.0;
  EXPECT_THROW(validate_attack_config(c), ConfigError);
  EXPECT_EQ(attack_mode_from_string("edges"), AttackMode::edges_only);
  EXPECT_THROW(attack_mode_from_string("nope"), ConfigError);
}

TEST(Gradients, VanishWithZeroWeights) {
  Rng rng(1);
  const Graph g = random_graph(rng, 6, 2, 0.5);
  SurrogateParams p = random_params(rng, 2);
  const auto ws = make_workspace(g);
  SurrogateParams zero_theta = p;
  zero_theta.theta.fill(0.0);
  SurrogateParams zero_w = p;
  zero_w.W.fill(0.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (double v : grad_score_wrt_edges(zero_theta, g, ws, i)) EXPECT_EQ(v, 0.0);
    for (double v : grad_score_wrt_edges(zero_w, g, ws, i)) EXPECT_EQ(v, 0.0);
    for (double v : grad_score_wrt_feature(zero_theta, g, ws, i)) EXPECT_EQ(v, 0.0);
  }
}

TEST(Gradients, PathWithIdentityWeightsMatchesFrozenOracle) {
  const Graph g = graph_of(3, {{0, 1}, {1, 2}}, Matrix::identity(3));
  SurrogateParams p;
  p.W = Matrix::identity(3);
  p.theta = Matrix(3, 1, 1.0);
  p.V1 = Matrix(3, 1);
  p.V2 = Matrix(1, 2);
  p.b1 = Matrix(1, 1);
  p.b2 = Matrix(1, 2);
  const auto ws = make_workspace(g);
  const Vector d = inv_sqrt_degrees(g);
  for (std::size_t i = 0; i < 3; ++i) {
    const Vector grad = grad_score_wrt_edges(p, g, ws, i);
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == i) continue;
      auto f = [&](const Matrix& base) { return frozen_score(p, base, d, g.features, i); };
      const double fd = -finite_difference_gradient(f, with_loops(g), i, j, 1e-5);
      EXPECT_LE(rel(grad[j], fd), 1e-4) << i << "," << j;
    }
  }
}

TEST(Gradients, RandomGraphsMatchFrozenOracle) {
  Rng rng(77);
  double worst_e = 0.0, worst_f = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = 1 + rng.below(3);
    const Graph g = random_graph(rng, 3 + rng.below(8), d, 0.5);
    const SurrogateParams p = random_params(rng, d);
    const auto ws = make_workspace(g);
    const Vector dv = inv_sqrt_degrees(g);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      const Vector ge = grad_score_wrt_edges(p, g, ws, i);
      for (std::size_t j = 0; j < g.node_count(); ++j) {
        if (j == i) continue;
        auto f = [&](const Matrix& base) { return frozen_score(p, base, dv, g.features, i); };
        worst_e = std::max(worst_e, rel(ge[j], -finite_difference_gradient(f, with_loops(g), i, j, 1e-5)));
      }
      const Vector gf = grad_score_wrt_feature(p, g, ws, i);
      for (std::size_t c = 0; c < d; ++c) {
        auto f = [&](const Matrix& h) { return frozen_score(p, with_loops(g), dv, h, i); };
        worst_f = std::max(worst_f, rel(gf[c], -finite_difference_gradient(f, g.features, i, c, 1e-5)));
      }
    }
  }
  EXPECT_LE(worst_e, 1e-4);
  EXPECT_LE(worst_f, 1e-4);
}

TEST(Gradients, FiniteDifferenceErrorDecays) {
  const Graph g = graph_of(4, {{0, 1}, {1, 2}, {2, 3}}, Matrix{{0.3}, {-0.7}, {1.1}, {0.4}});
  Rng rng(3);
  const SurrogateParams p = random_params(rng, 1);
  const auto ws = make_workspace(g);
  const Vector dv = inv_sqrt_degrees(g);
  const double exact = grad_score_wrt_edges(p, g, ws, 1)[3];
  auto f = [&](const Matrix& base) { return frozen_score(p, base, dv, g.features, 1); };
  // The frozen score is quadratic in a single entry, so central differences are exact up to rounding.
  for (double step : {1e-3, 1e-4, 1e-5})
    EXPECT_NEAR(-finite_difference_gradient(f, with_loops(g), 1, 3, step), exact, 1e-9);
}

TEST(Gradients, IsolatedNodeFeatureGradientIsMinusWTheta) {
  const Graph g = graph_of(3, {{1, 2}}, Matrix{{1, 2}, {3, 4}, {5, 6}});
  Rng rng(4);
  const SurrogateParams p = random_params(rng, 2);
  const Vector grad = grad_score_wrt_feature(p, g, make_workspace(g), 0);
  for (std::size_t e = 0; e < 2; ++e) {
    double wt = 0.0;
    for (std::size_t c = 0; c < p.hidden_f(); ++c) wt += p.W(e, c) * p.theta(c, 0);
    EXPECT_NEAR(grad[e], -wt, 1e-15);
  }
}

TEST(Gradients, WorkspaceMismatch) {
  Rng rng(4);
  const Graph g = random_graph(rng, 4, 2, 0.5);
  const SurrogateParams p = random_params(rng, 2);
  EXPECT_THROW(grad_score_wrt_edges(p, g, make_workspace(random_graph(rng, 5, 2, 0.5)), 0), StructuralError);
  EXPECT_THROW(grad_score_wrt_edges(p, g, make_workspace(g), 4), StructuralError);
  EXPECT_THROW(grad_score_wrt_feature(random_params(rng, 3), g, make_workspace(g), 0), StructuralError);
}

TEST(Attack, ZeroBudgetIsIdentity) {
  Rng rng(5);
  const Graph g = random_graph(rng, 8, 2, 0.4);
  const SurrogateParams p = random_params(rng, 2);
  Budget b;
  b.edit_ratio_max = b.deltacon_max = b.feature_l1_max = 0.0;
  AttackConfig c;
  c.multi_pass = true;
  const auto r = generate_adversarial(p, g, b, c);
  EXPECT_EQ(r.perturbed, g);
  EXPECT_TRUE(r.edits.empty());
  const auto base = random_baseline_attack(g, b, c, 1);
  EXPECT_EQ(base.perturbed, g);
  EXPECT_TRUE(base.edits.empty());
}

TEST(Attack, CompleteGraphOnlyDeletes) {
  Rng rng(6);
  EdgeList k4;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) k4.emplace_back(i, j);
  AttackConfig c;
  c.mode = AttackMode::edges_only;
  c.target_node_fraction = 0.25;
  std::size_t deletes = 0;
  for (int trial = 0; trial < 30; ++trial) {
    Matrix x(4, 2);
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const Graph g = graph_of(4, k4, x);
    const auto r = generate_adversarial(random_params(rng, 2), g, loose_budget(), c);
    for (const Edit& e : r.edits) {
      EXPECT_EQ(e.kind, EditKind::edge_delete);
      ++deletes;
    }
  }
  EXPECT_GT(deletes, 0u);
}

TEST(Attack, FirstFlipMatchesBruteForceOnFixture) {
  // Path 0-1-2-3-4 with a chord 1-3; hand-set weights.
  const Graph g = graph_of(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 3}},
                           Matrix{{1.0, 0.0}, {0.5, 1.0}, {0.0, 1.0}, {1.0, 1.0}, {0.2, -0.5}});
  SurrogateParams p;
  p.W = Matrix{{1.0, -0.5, 0.3}, {0.4, 0.8, -0.2}};
  p.theta = Matrix{{1.0}, {0.5}, {-0.3}};
  p.V1 = Matrix{{1, 0}, {0, 1}, {1, 1}};
  p.V2 = Matrix{{1, -1}, {-1, 1}};
  p.b1 = Matrix(1, 2);
  p.b2 = Matrix(1, 2);
  AttackConfig c;
  c.mode = AttackMode::edges_only;
  const auto r = generate_adversarial(p, g, loose_budget(), c);
  ASSERT_FALSE(r.flips.empty());
  const std::size_t t = r.target_nodes.front();
  EXPECT_EQ(t, select_topk(score_nodes(p, g).second, p.pool_ratio).front());

  const double s0 = score_nodes(p, g).second[t];
  double best_drop = 0.0;
  std::size_t best_j = t;
  for (std::size_t j = 0; j < 5; ++j) {
    if (j == t) continue;
    Graph h = g;
    const bool present = g.adjacency(t, j) != 0.0;
    apply_edit(h, {present ? EditKind::edge_delete : EditKind::edge_add, t, j, std::nullopt});
    const double drop = s0 - score_nodes(p, h).second[t];
    if (drop > best_drop) {
      best_drop = drop;
      best_j = j;
    }
  }
  EXPECT_EQ(r.flips.front().target, t);
  EXPECT_EQ(r.flips.front().other, best_j);
  EXPECT_NEAR(r.flips.front().score_before - r.flips.front().score_after, best_drop, 1e-12);
}

TEST(Attack, BudgetSafetyAndScoreMonotonicity) {
  Rng rng(12);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t d = 1 + rng.below(3);
    const Graph g = random_graph(rng, 4 + rng.below(20), d, 0.3);
    const SurrogateParams p = random_params(rng, d, 6);
    Budget b;
    b.edit_ratio_max = rng.uniform(0.0, 0.2);
    b.deltacon_max = rng.uniform(0.0, 0.5);
    b.feature_l1_max = rng.uniform(0.0, 0.5);
    AttackConfig c;
    c.mode = static_cast<AttackMode>(trial % 3);
    c.target_node_fraction = rng.uniform(0.05, 0.5);
    c.multi_pass = trial % 2 == 0;
    const auto r = generate_adversarial(p, g, b, c);
    const BudgetUsage u = measure_budget(g, r.perturbed, b);
    EXPECT_LE(u.edit_ratio, b.edit_ratio_max);
    EXPECT_LE(u.deltacon, b.deltacon_max);
    EXPECT_LE(u.feature_l1, b.feature_l1_max);
    EXPECT_EQ(u, r.budget_usage);
    EXPECT_EQ(replay_edits(g, r.edits), r.perturbed);
    for (const auto& f : r.flips) EXPECT_LT(f.score_after, f.score_before);
    // Every target that received an edit ends at or below its original score.
    const Vector s0 = score_nodes(p, g).second;
    const Vector s1 = score_nodes(p, r.perturbed).second;
    for (std::size_t k = 0; k < r.target_nodes.size(); ++k) {
      const std::size_t t = r.target_nodes[k];
      EXPECT_DOUBLE_EQ(r.score_drops[k], s0[t] - s1[t]);
      const bool edited = std::any_of(r.edits.begin(), r.edits.end(), [t](const Edit& e) { return e.target == t; });
      if (edited) EXPECT_GE(s0[t] - s1[t], 0.0) << "trial " << trial << " target " << t;
    }
    const auto base = random_baseline_attack(g, b, c, trial);
    const BudgetUsage ub = measure_budget(g, base.perturbed, b);
    EXPECT_LE(ub.edit_ratio, b.edit_ratio_max);
    EXPECT_LE(ub.deltacon, b.deltacon_max);
    EXPECT_EQ(ub.feature_l1, 0.0);
    EXPECT_EQ(replay_edits(g, base.edits), base.perturbed);
  }
}

TEST(Attack, FeatureStepLandsOnBoundary) {
  Rng rng(13);
  const Graph g = random_graph(rng, 8, 2, 0.4);
  const SurrogateParams p = random_params(rng, 2);
  Budget b = loose_budget();
  b.feature_l1_max = 0.05;
  AttackConfig c;
  c.mode = AttackMode::features_only;
  c.feature_step_scale = 10.0;
  const auto r = generate_adversarial(p, g, b, c);
  ASSERT_EQ(r.edits.size(), 1u);
  EXPECT_EQ(r.edits[0].kind, EditKind::feature_update);
  EXPECT_LE(r.budget_usage.feature_l1, 0.05);
  EXPECT_NEAR(r.budget_usage.feature_l1, 0.05, 1e-12);
  EXPECT_EQ(r.perturbed.adjacency, g.adjacency);
}

TEST(Attack, FlipCapIsRespected) {
  Rng rng(14);
  const Graph g = random_graph(rng, 20, 2, 0.3);
  const SurrogateParams p = random_params(rng, 2);
  AttackConfig c;
  c.mode = AttackMode::edges_only;
  c.multi_pass = true;
  c.target_node_fraction = 0.5;
  c.max_edge_flip_fraction = 0.05;
  const std::size_t cap = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(g.edge_count())));
  EXPECT_LE(generate_adversarial(p, g, loose_budget(), c).flips.size(), cap);
  EXPECT_LE(random_baseline_attack(g, loose_budget(), c, 3).flips.size(), cap);
}

TEST(Attack, Preconditions) {
  Rng rng(15);
  const Graph g = random_graph(rng, 5, 2, 0.5);
  SurrogateParams p = random_params(rng, 2);
  p.W(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(generate_adversarial(p, g, Budget{}, AttackConfig{}), PreconditionError);
  Graph empty;
  EXPECT_THROW(random_baseline_attack(empty, Budget{}, AttackConfig{}, 0), PreconditionError);
}

TEST(Baseline, DeterministicInSeed) {
  Rng rng(16);
  const Graph g = random_graph(rng, 30, 1, 0.2);
  AttackConfig c;
  c.target_node_fraction = 0.2;
  const auto a = random_baseline_attack(g, loose_budget(), c, 42);
  const auto b = random_baseline_attack(g, loose_budget(), c, 42);
  EXPECT_EQ(a.edits, b.edits);
  EXPECT_EQ(a.perturbed, b.perturbed);
  EXPECT_EQ(a.target_nodes.size(), 6u);
  EXPECT_EQ(a.flips.size(), 6u);
  bool differs = false;
  for (std::uint64_t s = 43; s < 48 && !differs; ++s) differs = random_baseline_attack(g, loose_budget(), c, s).edits != a.edits;
  EXPECT_TRUE(differs);
}

TEST(Baseline, MultiPassNeverUndoesAFlip) {
  Rng rng(17);
  const Graph g = random_graph(rng, 12, 1, 0.3);
  AttackConfig c;
  c.multi_pass = true;
  c.target_node_fraction = 0.1;
  Budget b = loose_budget();
  b.edit_ratio_max = 0.1;
  const auto r = random_baseline_attack(g, b, c, 9);
  EXPECT_GT(r.flips.size(), 2u);
  std::set<std::pair<std::size_t, std::size_t>> touched;
  for (const Edit& e : r.edits) {
    const auto key = std::minmax(e.target, *e.other);
    EXPECT_TRUE(touched.insert(key).second);
  }
  EXPECT_LE(r.budget_usage.edit_ratio, 0.1);
}
