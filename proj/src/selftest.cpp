#include "poolbreaker/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "poolbreaker/attack.hpp"
#include "poolbreaker/metrics.hpp"
#include "poolbreaker/numerics.hpp"
#include "poolbreaker/random.hpp"

namespace poolbreaker {

namespace {

Graph random_graph(Rng& rng, std::size_t d) {
  const std::size_t n = 3 + rng.below(8);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.5) edges.emplace_back(i, j);
  Matrix x(n, d);
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  return make_graph(n, edges, std::move(x), 0);
}

SurrogateParams random_params(Rng& rng, std::size_t d) {
  SurrogateParams p;
  p.W = Matrix(d, 4);
  p.theta = Matrix(4, 1);
  p.V1 = Matrix(4, 3);
  p.V2 = Matrix(3, 2);
  p.b1 = Matrix(1, 3);
  p.b2 = Matrix(1, 2);
  for (Matrix* m : p.tensors())
    for (double& v : m->values()) v = rng.uniform(-1.0, 1.0);
  return p;
}

// Score of node i with the adjacency-plus-self-loop matrix `base` and the
// inverse-sqrt degrees `d` supplied by the caller.
double frozen_score(const SurrogateParams& p, const Matrix& base, const Vector& d, const Matrix& h, std::size_t i) {
  const std::size_t n = base.rows();
  Matrix norm(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) norm(r, c) = d[r] * base(r, c) * d[c];
  const Matrix h1 = matmul(matmul(norm, h), p.W);
  const Matrix s = matmul(matmul(norm, h1), p.theta);
  return s(i, 0);
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

GradientCheckSummary check_score_gradients(std::size_t graphs, std::uint64_t seed, double step) {
  Rng rng(seed);
  GradientCheckSummary out;
  out.graphs = graphs;
  for (std::size_t g = 0; g < graphs; ++g) {
    const std::size_t d = 1 + rng.below(3);
    const Graph graph = random_graph(rng, d);
    const SurrogateParams p = random_params(rng, d);
    const GradientWorkspace ws = make_workspace(graph);
    const std::size_t n = graph.node_count();
    for (std::size_t i = 0; i < n; ++i) {
      const Vector ge = grad_score_wrt_edges(p, graph, ws, i);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        auto f = [&](const Matrix& base) { return frozen_score(p, base, ws.inv_sqrt_degree, graph.features, i); };
        const double fd = -finite_difference_gradient(f, ws.base, i, j, step);
        out.max_rel_error_edges = std::max(out.max_rel_error_edges, rel_error(ge[j], fd));
        ++out.entries;
      }
      const Vector gf = grad_score_wrt_feature(p, graph, ws, i);
      for (std::size_t c = 0; c < d; ++c) {
        auto f = [&](const Matrix& h) { return frozen_score(p, ws.base, ws.inv_sqrt_degree, h, i); };
        const double fd = -finite_difference_gradient(f, graph.features, i, c, step);
        out.max_rel_error_features = std::max(out.max_rel_error_features, rel_error(gf[c], fd));
        ++out.entries;
      }
    }
  }
  return out;
}

std::vector<SelftestLine> run_selftest(std::uint64_t seed) {
  std::vector<SelftestLine> lines;
  const GradientCheckSummary g = check_score_gradients(200, seed);
  lines.push_back({"gradient-edges", g.max_rel_error_edges < 1e-4,
                   "max-rel-error " + fmt("%.3e", g.max_rel_error_edges)});
  lines.push_back({"gradient-features", g.max_rel_error_features < 1e-4,
                   "max-rel-error " + fmt("%.3e", g.max_rel_error_features)});

  std::vector<std::pair<std::size_t, std::size_t>> star = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  const double grc = global_reaching_centrality(make_graph(5, star, Matrix(5, 1, 1.0), 0));
  lines.push_back({"grc-star", std::abs(grc - 0.375) < 1e-12, "value " + fmt("%.15g", grc)});

  std::vector<std::pair<std::size_t, std::size_t>> triangles = {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
  const Communities c = louvain_modularity(make_graph(6, triangles, Matrix(6, 1, 1.0), 0));
  lines.push_back({"louvain-triangles", std::abs(c.modularity - 0.5) < 1e-12 && c.count == 2,
                   "Q " + fmt("%.15g", c.modularity) + " communities " + std::to_string(c.count)});

  const TTest t = two_sample_t({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
  lines.push_back({"welch-t", std::abs(t.p - 0.3466) < 1e-3, "p " + fmt("%.6f", t.p)});
  return lines;
}

}  // namespace poolbreaker
