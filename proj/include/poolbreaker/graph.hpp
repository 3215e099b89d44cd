#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poolbreaker/matrix.hpp"

namespace poolbreaker {

// Attributed undirected graph with a class label.
struct Graph {
  Matrix adjacency;  // N x N, symmetric, binary, zero diagonal
  Matrix features;   // N x D
  std::size_t label = 0;

  std::size_t node_count() const noexcept { return adjacency.rows(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t edge_count() const noexcept;

  bool operator==(const Graph&) const = default;
};

// Builds a graph from an undirected edge list (0-based). Duplicates and
// self-loops are ignored.
Graph make_graph(std::size_t nodes,
                 std::span<const std::pair<std::size_t, std::size_t>> edges,
                 Matrix features, std::size_t label);

// Throws StructuralError when adjacency/features violate the Graph invariants.
void validate_graph(const Graph& g);

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  std::size_t class_count = 0;
  std::size_t feature_dim = 0;

  std::size_t size() const noexcept { return graphs.size(); }
};

void validate_dataset(const Dataset& d);

enum class Partition { train, valid, test };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  const std::vector<std::size_t>& indices(Partition p) const;
};

// Stratified 80/10/10 split: train = round(0.8 n), valid = round(0.1 n),
// test = remainder, each class allocated by largest remainder. Deterministic
// in (dataset, seed).
Split split_dataset(const Dataset& dataset, std::uint64_t seed);

std::vector<Graph> select_graphs(const Dataset& dataset, std::span<const std::size_t> idx);

// Parses a TUDataset directory (<name>_A.txt, <name>_graph_indicator.txt,
// <name>_graph_labels.txt, optional node labels/attributes).
Dataset parse_tudataset(const std::filesystem::path& directory, const std::string& name);

// Writes `dataset` in TUDataset text format. Features are emitted as node
// attributes; used for fixtures and for exporting synthetic corpora.
void write_tudataset(const Dataset& dataset, const std::filesystem::path& directory);

// --- Edits and adversarial bundles ------------------------------------------

enum class EditKind { edge_add, edge_delete, feature_update };

std::string to_string(EditKind k);
EditKind edit_kind_from_string(const std::string& s);

struct Edit {
  EditKind kind = EditKind::edge_add;
  std::size_t target = 0;
  std::optional<std::size_t> other;  // edge edits only
  std::optional<Vector> delta;       // feature updates only

  bool operator==(const Edit&) const = default;
};

// Applies one edit in place. Throws StructuralError on an inconsistent edit
// (adding an existing edge, deleting a missing one, wrong delta length).
void apply_edit(Graph& g, const Edit& e);
Graph replay_edits(const Graph& original, std::span<const Edit> edits);

struct BudgetUsage {
  double edit_ratio = 0.0;
  double deltacon = 0.0;
  double feature_l1 = 0.0;

  bool operator==(const BudgetUsage&) const = default;
};

struct BundleSample {
  std::size_t index = 0;  // position of the original graph in its dataset
  Graph perturbed;
  std::vector<Edit> edits;
  BudgetUsage budgets;

  bool operator==(const BundleSample&) const = default;
};

struct AdversarialBundle {
  std::string dataset;
  Partition split = Partition::test;
  std::vector<BundleSample> samples;

  bool operator==(const AdversarialBundle&) const = default;
};

std::string bundle_to_json(const AdversarialBundle& bundle);
AdversarialBundle bundle_from_json(const std::string& text);
void write_bundle(const AdversarialBundle& bundle, const std::filesystem::path& path);
AdversarialBundle read_bundle(const std::filesystem::path& path);

// Throws StructuralError if any sample index is out of range or replaying its
// edit log on the original does not reproduce the stored graph exactly.
void verify_bundle_replay(const AdversarialBundle& bundle, const Dataset& originals);

}  // namespace poolbreaker
