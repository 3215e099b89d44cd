#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/metrics.hpp"
#include "poolbreaker/random.hpp"

using namespace poolbreaker;

namespace {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

Graph graph_of(std::size_t n, const EdgeList& edges) { return make_graph(n, edges, Matrix(n, 1, 1.0), 0); }

Graph random_graph(Rng& rng, std::size_t n, double p) {
  EdgeList edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return graph_of(n, edges);
}

Graph star(std::size_t n) {
  EdgeList e;
  for (std::size_t i = 1; i < n; ++i) e.emplace_back(0, i);
  return graph_of(n, e);
}

// Newman modularity from the pairwise definition.
double pairwise_modularity(const Matrix& a, const std::vector<std::size_t>& c) {
  const std::size_t n = a.rows();
  Vector k(n, 0.0);
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      k[i] += a(i, j);
      m2 += a(i, j);
    }
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (c[i] == c[j]) q += a(i, j) - k[i] * k[j] / m2;
  return q / m2;
}

// Two-sided Student-t tail by composite Simpson integration of the density.
double t_tail_oracle(double t, double df) {
  const double logc = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  auto pdf = [&](double x) { return std::exp(logc - (df + 1) / 2 * std::log1p(x * x / df)); };
  const double hi = std::abs(t);
  const int steps = 200000;
  const double h = hi / steps;
  double s = pdf(0) + pdf(hi);
  for (int i = 1; i < steps; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace

TEST(DegreeKl, CycleVersusPathByHand) {
  const Graph cycle = graph_of(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  const Graph path = graph_of(4, {{0, 1}, {1, 2}, {2, 3}});
  const double a = 1e-6;
  // Support {1, 2}: cycle counts (0, 4), path counts (2, 2).
  const double z = 4.0 + 2.0 * a;
  const double p1 = a / z, p2 = (4 + a) / z, q1 = (2 + a) / z, q2 = (2 + a) / z;
  const double expect = p1 * std::log(p1 / q1) + p2 * std::log(p2 / q2);
  EXPECT_NEAR(degree_kl(cycle, path), expect, 1e-14);
  EXPECT_GT(degree_kl(cycle, path), 0.69);
}

TEST(DegreeKl, ZeroForEqualDegreeMultisets) {
  const Graph p1 = graph_of(4, {{0, 1}, {1, 2}, {2, 3}});
  const Graph p2 = graph_of(4, {{0, 2}, {2, 1}, {1, 3}});
  EXPECT_EQ(degree_kl(p1, p1), 0.0);
  EXPECT_EQ(degree_kl(p1, p2), 0.0);
}

TEST(DegreeKl, NonNegativeAndNormalized) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const Graph a = random_graph(rng, 1 + rng.below(12), 0.4), b = random_graph(rng, 1 + rng.below(12), 0.4);
    EXPECT_GE(degree_kl(a, b), 0.0);
    const auto [p, q] = smoothed_degree_distributions(a.adjacency, b.adjacency);
    double sp = 0, sq = 0;
    for (double v : p.probabilities) sp += v;
    for (double v : q.probabilities) sq += v;
    EXPECT_NEAR(sp, 1.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-12);
    EXPECT_TRUE(std::is_sorted(p.support.begin(), p.support.end()));
  }
  EXPECT_THROW(degree_kl(Graph{}, graph_of(2, {})), PreconditionError);
}

TEST(Grc, KnownValues) {
  EdgeList k5;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) k5.emplace_back(i, j);
  EXPECT_NEAR(global_reaching_centrality(graph_of(5, k5)), 0.0, 1e-12);
  EXPECT_NEAR(global_reaching_centrality(star(5)), 0.375, 1e-12);
  EXPECT_EQ(global_reaching_centrality(graph_of(1, {})), 0.0);
  const Vector local = local_reaching_centrality(star(5).adjacency);
  EXPECT_NEAR(local[0], 1.0, 1e-15);
  EXPECT_NEAR(local[3], 0.625, 1e-15);
}

TEST(Grc, MatchesFloydWarshallOracleAndRange) {
  Rng rng(2);
  for (int t = 0; t < 60; ++t) {
    const Graph g = random_graph(rng, 2 + rng.below(10), 0.3);
    const std::size_t n = g.node_count();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Vector> d(n, Vector(n, inf));
    for (std::size_t i = 0; i < n; ++i) {
      d[i][i] = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (g.adjacency(i, j) != 0.0) d[i][j] = 1;
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    Vector c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && d[i][j] < inf) c[i] += 1.0 / d[i][j];
      c[i] /= static_cast<double>(n - 1);
    }
    const double cmax = *std::max_element(c.begin(), c.end());
    double grc = 0;
    for (double v : c) grc += cmax - v;
    grc /= static_cast<double>(n - 1);
    const double got = global_reaching_centrality(g);
    EXPECT_NEAR(got, grc, 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(Louvain, TwoTriangles) {
  const Graph g = graph_of(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
  const Communities c = louvain_modularity(g);
  EXPECT_NEAR(c.modularity, 0.5, 1e-12);
  EXPECT_NEAR(2.0 * (3.0 / 6.0 - std::pow(6.0 / 12.0, 2)), 0.5, 1e-15);
  EXPECT_EQ(c.count, 2u);
  EXPECT_EQ(c.assignment, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
}

TEST(Louvain, SingleEdgeAndEdgeless) {
  const Graph k2 = graph_of(2, {{0, 1}});
  // Both partitions of two nodes: together Q = 0, apart Q = -1/2.
  EXPECT_NEAR(pairwise_modularity(k2.adjacency, {0, 0}), 0.0, 1e-15);
  EXPECT_NEAR(pairwise_modularity(k2.adjacency, {0, 1}), -0.5, 1e-15);
  const Communities c = louvain_modularity(k2);
  EXPECT_EQ(c.count, 1u);
  EXPECT_NEAR(c.modularity, 0.0, 1e-15);
  const Communities e = louvain_modularity(graph_of(4, {}));
  EXPECT_EQ(e.count, 4u);
  EXPECT_EQ(e.modularity, 0.0);
  EXPECT_EQ(e.assignment, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Louvain, MonotoneTraceAndConsistentModularity) {
  Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    const Graph g = random_graph(rng, 4 + rng.below(20), 0.25);
    if (g.edge_count() == 0) continue;
    std::vector<double> trace;
    const Communities c = louvain_modularity(g, &trace);
    std::vector<std::size_t> singletons(g.node_count());
    for (std::size_t i = 0; i < singletons.size(); ++i) singletons[i] = i;
    double last = pairwise_modularity(g.adjacency, singletons);
    for (double q : trace) {
      EXPECT_GE(q, last - 1e-12);
      last = q;
    }
    EXPECT_NEAR(c.modularity, pairwise_modularity(g.adjacency, c.assignment), 1e-12);
    EXPECT_NEAR(modularity(g.adjacency, c.assignment), c.modularity, 1e-15);
    EXPECT_GE(c.modularity, -1e-12);
    EXPECT_EQ(louvain_modularity(g).assignment, c.assignment);
    std::size_t max_id = *std::max_element(c.assignment.begin(), c.assignment.end());
    EXPECT_EQ(max_id + 1, c.count);
  }
}

TEST(TTest, FixtureAgainstQuadrature) {
  const TTest r = two_sample_t({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
  EXPECT_NEAR(r.t, -1.0, 1e-12);
  EXPECT_NEAR(r.df, 8.0, 1e-12);
  EXPECT_NEAR(r.p, 0.3466, 1e-3);
  EXPECT_NEAR(r.p, t_tail_oracle(r.t, r.df), 1e-9);
}

TEST(TTest, UnequalVariancesAgainstQuadrature) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Vector a(3 + rng.below(8)), b(3 + rng.below(8));
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = 0.5 + 3.0 * rng.normal();
    const TTest r = two_sample_t(a, b);
    // Welch statistic and Satterthwaite df, recomputed.
    auto stats = [](const Vector& x) {
      double m = 0;
      for (double v : x) m += v;
      m /= x.size();
      double s = 0;
      for (double v : x) s += (v - m) * (v - m);
      return std::pair{m, s / (x.size() - 1) / x.size()};
    };
    const auto [ma, va] = stats(a);
    const auto [mb, vb] = stats(b);
    const double t = (ma - mb) / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
    EXPECT_NEAR(r.t, t, 1e-12);
    EXPECT_NEAR(r.df, df, 1e-9);
    EXPECT_NEAR(r.p, t_tail_oracle(t, df), 1e-7);
    const TTest s = two_sample_t(b, a);
    EXPECT_NEAR(s.p, r.p, 1e-15);
    EXPECT_NEAR(s.t, -r.t, 1e-15);
  }
}

TEST(TTest, DegenerateCases) {
  const TTest same = two_sample_t({1, 2, 3}, {1, 2, 3});
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  const TTest flat = two_sample_t({2, 2}, {2, 2});
  EXPECT_EQ(flat.t, 0.0);
  EXPECT_EQ(flat.p, 1.0);
  const TTest sep = two_sample_t({0, 1e-9, 0, 2e-9}, {1, 1 + 1e-9, 1, 1 - 1e-9});
  EXPECT_LT(sep.p, 1e-6);
  EXPECT_THROW(two_sample_t({1}, {1, 2}), PreconditionError);
}

TEST(MetricReport, EmptyEditsGiveZeroKlAndUnitP) {
  Dataset d;
  d.name = "stars";
  d.class_count = 1;
  d.feature_dim = 1;
  for (std::size_t n = 5; n < 15; ++n) d.graphs.push_back(star(n));
  AdversarialBundle b;
  for (std::size_t i = 0; i < d.size(); ++i) b.samples.push_back({i, d.graphs[i], {}, {}});
  const MetricReport r = metric_report(d, b, 3);
  EXPECT_EQ(r.mean_kl, 0.0);
  EXPECT_EQ(r.kl_std, 0.0);
  EXPECT_EQ(r.grc.p, 1.0);
  EXPECT_EQ(r.modularity.p, 1.0);
  EXPECT_THROW(metric_report(d, AdversarialBundle{}), PreconditionError);
}

TEST(MetricReport, HubLossShiftsGrc) {
  Dataset d;
  d.name = "stars";
  d.class_count = 1;
  d.feature_dim = 1;
  AdversarialBundle b;
  for (std::size_t n = 6; n < 16; ++n) {
    d.graphs.push_back(star(n));
    // Keep one spoke, rewire the remaining leaves into a path.
    EdgeList e = {{0, 1}};
    for (std::size_t i = 2; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    b.samples.push_back({d.size() - 1, graph_of(n, e), {}, {}});
  }
  const MetricReport r = metric_report(d, b);
  EXPECT_LT(r.grc.p, 0.05);
  EXPECT_GT(r.mean_kl, 0.0);
  const std::string csv = metric_report_csv(r);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,kl,grc_orig,grc_adv,q_orig,q_adv,communities_orig,communities_adv");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 11u);
  EXPECT_EQ(last.rfind("mean,", 0), 0u);
  const auto j = metric_report_to_json(r);
  EXPECT_EQ(j.at("perGraph").size(), 10u);
  EXPECT_DOUBLE_EQ(j.at("grcPValue").get<double>(), r.grc.p);
}
