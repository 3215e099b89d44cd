#include "poolbreaker/synthetic.hpp"

#include <numeric>
#include <utility>
#include <vector>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/random.hpp"

namespace poolbreaker {

Dataset make_synthetic(const SyntheticOptions& o) {
  if (o.min_nodes < 3 || o.max_nodes < o.min_nodes) throw ConfigError("synthetic.nodes", "need 3 <= min <= max");
  if (o.attributed && o.feature_dim < 2) throw ConfigError("synthetic.feature_dim", "attributed variant needs >= 2");
  if (!(o.extra_edge_prob >= 0.0 && o.extra_edge_prob <= 1.0))
    throw ConfigError("synthetic.extra_edge_prob", "must lie in [0, 1]");
  Rng rng(o.seed);
  Dataset d;
  d.name = o.attributed ? "synthetic-attributed" : "synthetic";
  d.class_count = 2;
  const std::size_t base_dim = o.degree_feature ? 2 : 1;
  d.feature_dim = base_dim + (o.attributed ? o.feature_dim - 1 : 0);
  for (std::size_t g = 0; g < o.graphs; ++g) {
    const std::size_t label = g % 2;
    const std::size_t n = o.min_nodes + rng.below(o.max_nodes - o.min_nodes + 1);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    if (label == 0) {
      for (std::size_t i = 0; i < n; ++i) edges.emplace_back(perm[i], perm[(i + 1) % n]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 2; j < n; ++j)
          if (!(i == 0 && j == n - 1) && o.extra_edge_prob > 0.0 && rng.uniform() < o.extra_edge_prob)
            edges.emplace_back(perm[i], perm[j]);
    } else {
      for (std::size_t i = 1; i < n; ++i) edges.emplace_back(perm[0], perm[i]);
      for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (o.extra_edge_prob > 0.0 && rng.uniform() < o.extra_edge_prob) edges.emplace_back(perm[i], perm[j]);
    }
    Graph graph = make_graph(n, edges, Matrix(n, d.feature_dim, 0.0), label);
    for (std::size_t i = 0; i < n; ++i) {
      graph.features(i, 0) = 1.0;
      if (o.degree_feature) {
        double deg = 0.0;
        for (double v : graph.adjacency.row(i)) deg += v;
        graph.features(i, 1) = deg / o.degree_scale;
      }
      if (o.attributed) {
        const double mean = label == 0 ? -o.feature_signal : o.feature_signal;
        for (std::size_t c = base_dim; c < d.feature_dim; ++c)
          graph.features(i, c) = mean + o.feature_noise * rng.normal();
      }
    }
    d.graphs.push_back(std::move(graph));
  }
  validate_dataset(d);
  return d;
}

}  // namespace poolbreaker
