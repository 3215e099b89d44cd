#include "poolbreaker/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/numerics.hpp"
#include "poolbreaker/random.hpp"

namespace poolbreaker {

std::size_t Graph::edge_count() const noexcept {
  std::size_t count = 0;
  const std::size_t n = node_count();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (adjacency(i, j) != 0.0) ++count;
  return count;
}

Graph make_graph(std::size_t nodes,
                 std::span<const std::pair<std::size_t, std::size_t>> edges,
                 Matrix features, std::size_t label) {
  Graph g;
  g.adjacency = Matrix(nodes, nodes);
  for (auto [a, b] : edges) {
    if (a >= nodes || b >= nodes) throw StructuralError("edge endpoint out of range");
    if (a == b) continue;
    g.adjacency(a, b) = 1.0;
    g.adjacency(b, a) = 1.0;
  }
  g.features = std::move(features);
  g.label = label;
  validate_graph(g);
  return g;
}

void validate_graph(const Graph& g) {
  validate_adjacency(g.adjacency);
  if (g.features.rows() != g.node_count())
    throw StructuralError("feature matrix has " + std::to_string(g.features.rows()) +
                          " rows for " + std::to_string(g.node_count()) + " nodes");
  require_finite(g.features, "node features");
}

void validate_dataset(const Dataset& d) {
  std::vector<std::size_t> per_class(d.class_count, 0);
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    const Graph& g = d.graphs[i];
    validate_graph(g);
    if (g.feature_dim() != d.feature_dim)
      throw StructuralError("graph " + std::to_string(i) + " has feature dim " +
                            std::to_string(g.feature_dim()) + ", dataset expects " +
                            std::to_string(d.feature_dim));
    if (g.label >= d.class_count)
      throw StructuralError("graph " + std::to_string(i) + " label out of range");
    ++per_class[g.label];
  }
  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (per_class[c] == 0) throw StructuralError("class " + std::to_string(c) + " has no graphs");
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::valid: return "valid";
    case Partition::test: return "test";
  }
  return "test";
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::train;
  if (s == "valid") return Partition::valid;
  if (s == "test") return Partition::test;
  throw StructuralError("unknown partition '" + s + "'");
}

const std::vector<std::size_t>& Split::indices(Partition p) const {
  switch (p) {
    case Partition::train: return train;
    case Partition::valid: return valid;
    case Partition::test: return test;
  }
  return test;
}

namespace {

// Distributes `total` items over classes in proportion to `tenths[c]/10` using
// the largest-remainder rule, never exceeding `room[c]`.
std::vector<std::size_t> allocate(std::size_t total, const std::vector<std::size_t>& tenths,
                                  const std::vector<std::size_t>& room) {
  const std::size_t k = tenths.size();
  std::vector<std::size_t> out(k);
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = std::min(tenths[c] / 10, room[c]);
    used += out[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tenths[a] % 10 > tenths[b] % 10;
  });
  while (used < total) {
    bool progressed = false;
    for (std::size_t c : order) {
      if (used == total) break;
      if (out[c] < room[c]) {
        ++out[c];
        ++used;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return out;
}

}  // namespace

Split split_dataset(const Dataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (n < 10) throw SplitError("dataset has " + std::to_string(n) + " graphs; at least 10 required");

  const std::size_t k = std::max<std::size_t>(dataset.class_count, 1);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = dataset.graphs[i].label;
    if (label >= k) throw SplitError("graph label out of range");
    by_class[label].push_back(i);
  }

  Rng rng(seed);
  for (auto& members : by_class) rng.shuffle(members);

  // round-half-up of 80% and 10%; test takes the rest.
  const std::size_t train_total = (8 * n + 5) / 10;
  const std::size_t valid_total = (n + 5) / 10;

  std::vector<std::size_t> sizes(k), train_tenths(k), valid_tenths(k);
  for (std::size_t c = 0; c < k; ++c) {
    sizes[c] = by_class[c].size();
    train_tenths[c] = 8 * sizes[c];
    valid_tenths[c] = sizes[c];
  }
  const auto train_counts = allocate(train_total, train_tenths, sizes);
  std::vector<std::size_t> room(k);
  for (std::size_t c = 0; c < k; ++c) room[c] = sizes[c] - train_counts[c];
  const auto valid_counts = allocate(valid_total, valid_tenths, room);

  Split split;
  split.seed = seed;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& members = by_class[c];
    std::size_t pos = 0;
    for (; pos < train_counts[c]; ++pos) split.train.push_back(members[pos]);
    for (std::size_t end = pos + valid_counts[c]; pos < end; ++pos) split.valid.push_back(members[pos]);
    for (; pos < members.size(); ++pos) split.test.push_back(members[pos]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.test.begin(), split.test.end());

  std::vector<char> seen(n, 0);
  for (const auto* part : {&split.train, &split.valid, &split.test})
    for (std::size_t i : *part) {
      if (seen[i]) throw SplitError("split is not a partition");
      seen[i] = 1;
    }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw SplitError("split does not cover every graph");
  return split;
}

std::vector<Graph> select_graphs(const Dataset& dataset, std::span<const std::size_t> idx) {
  std::vector<Graph> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= dataset.size()) throw StructuralError("graph index out of range");
    out.push_back(dataset.graphs[i]);
  }
  return out;
}

std::string to_string(EditKind k) {
  switch (k) {
    case EditKind::edge_add: return "edge-add";
    case EditKind::edge_delete: return "edge-delete";
    case EditKind::feature_update: return "feature-update";
  }
  return "edge-add";
}

EditKind edit_kind_from_string(const std::string& s) {
  if (s == "edge-add") return EditKind::edge_add;
  if (s == "edge-delete") return EditKind::edge_delete;
  if (s == "feature-update") return EditKind::feature_update;
  throw StructuralError("unknown edit kind '" + s + "'");
}

void apply_edit(Graph& g, const Edit& e) {
  const std::size_t n = g.node_count();
  if (e.target >= n) throw StructuralError("edit target out of range");
  switch (e.kind) {
    case EditKind::edge_add:
    case EditKind::edge_delete: {
      if (!e.other || *e.other >= n || *e.other == e.target)
        throw StructuralError("edge edit needs a distinct in-range endpoint");
      const std::size_t j = *e.other;
      const bool present = g.adjacency(e.target, j) != 0.0;
      const bool adding = e.kind == EditKind::edge_add;
      if (present == adding)
        throw StructuralError(adding ? "edge-add on an existing edge" : "edge-delete on a missing edge");
      const double value = adding ? 1.0 : 0.0;
      g.adjacency(e.target, j) = value;
      g.adjacency(j, e.target) = value;
      break;
    }
    case EditKind::feature_update: {
      if (!e.delta || e.delta->size() != g.feature_dim())
        throw StructuralError("feature update delta has wrong length");
      auto row = g.features.row(e.target);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += (*e.delta)[c];
      break;
    }
  }
}

Graph replay_edits(const Graph& original, std::span<const Edit> edits) {
  Graph g = original;
  for (const Edit& e : edits) apply_edit(g, e);
  return g;
}

void verify_bundle_replay(const AdversarialBundle& bundle, const Dataset& originals) {
  for (const BundleSample& s : bundle.samples) {
    if (s.index >= originals.size())
      throw StructuralError("bundle sample index " + std::to_string(s.index) + " out of range");
    if (replay_edits(originals.graphs[s.index], s.edits) != s.perturbed)
      throw StructuralError("bundle sample " + std::to_string(s.index) +
                            ": edit log does not reproduce the perturbed graph");
  }
}

}  // namespace poolbreaker
