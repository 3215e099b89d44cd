#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/graph.hpp"

namespace poolbreaker {

namespace fs = std::filesystem;

namespace {

struct Line {
  std::size_t number;
  std::vector<std::string> fields;
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<Line> read_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.filename().string());
  std::vector<Line> rows;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (trim(text).empty()) continue;
    Line line{number, {}};
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) line.fields.push_back(trim(field));
    rows.push_back(std::move(line));
  }
  return rows;
}

long long parse_int(const std::string& s, const fs::path& file, std::size_t line) {
  long long value = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw IngestionError(file.filename().string() + ":" + std::to_string(line) +
                         ": expected an integer, got '" + s + "'");
  return value;
}

double parse_real(const std::string& s, const fs::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestionError(file.filename().string() + ":" + std::to_string(line) +
                         ": expected a real number, got '" + s + "'");
  }
}

fs::path required(const fs::path& dir, const std::string& name, const std::string& suffix) {
  fs::path p = dir / (name + suffix);
  if (!fs::exists(p)) throw IngestionError("missing mandatory file " + p.filename().string());
  return p;
}

}  // namespace

Dataset parse_tudataset(const fs::path& directory, const std::string& name) {
  const fs::path a_path = required(directory, name, "_A.txt");
  const fs::path ind_path = required(directory, name, "_graph_indicator.txt");
  const fs::path gl_path = required(directory, name, "_graph_labels.txt");
  const fs::path nl_path = directory / (name + "_node_labels.txt");
  const fs::path na_path = directory / (name + "_node_attributes.txt");

  // node -> (graph, local index)
  const auto indicator = read_rows(ind_path);
  const std::size_t total_nodes = indicator.size();
  std::vector<std::size_t> node_graph(total_nodes), node_local(total_nodes);
  std::map<long long, std::size_t> graph_slot;
  std::vector<std::size_t> graph_sizes;
  for (std::size_t v = 0; v < total_nodes; ++v) {
    const auto& row = indicator[v];
    const long long gid = parse_int(row.fields.at(0), ind_path, row.number);
    auto [it, inserted] = graph_slot.try_emplace(gid, graph_sizes.size());
    if (inserted) graph_sizes.push_back(0);
    node_graph[v] = it->second;
    node_local[v] = graph_sizes[it->second]++;
  }
  const std::size_t graph_count = graph_sizes.size();

  const auto graph_label_rows = read_rows(gl_path);
  if (graph_label_rows.size() != graph_count)
    throw IngestionError(gl_path.filename().string() + " has " +
                         std::to_string(graph_label_rows.size()) + " labels for " +
                         std::to_string(graph_count) + " graphs");
  std::vector<long long> raw_labels;
  for (const auto& row : graph_label_rows) raw_labels.push_back(parse_int(row.fields.at(0), gl_path, row.number));
  std::vector<long long> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  // The indicator lists graph ids in file order; labels are indexed by id order.
  std::vector<std::size_t> slot_label(graph_count);
  {
    std::size_t ordinal = 0;
    for (const auto& [gid, slot] : graph_slot) {
      const long long raw = raw_labels[ordinal++];
      slot_label[slot] = static_cast<std::size_t>(
          std::lower_bound(distinct.begin(), distinct.end(), raw) - distinct.begin());
    }
  }

  // Feature construction: one-hot node labels, then attributes; constant 1 otherwise.
  std::vector<std::size_t> node_label_index;
  std::size_t label_dim = 0;
  if (fs::exists(nl_path)) {
    const auto rows = read_rows(nl_path);
    if (rows.size() != total_nodes)
      throw IngestionError(nl_path.filename().string() + " has " + std::to_string(rows.size()) +
                           " rows for " + std::to_string(total_nodes) + " nodes");
    std::vector<long long> raw;
    for (const auto& row : rows) raw.push_back(parse_int(row.fields.at(0), nl_path, row.number));
    std::vector<long long> values = raw;
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    label_dim = values.size();
    for (long long r : raw)
      node_label_index.push_back(static_cast<std::size_t>(
          std::lower_bound(values.begin(), values.end(), r) - values.begin()));
  }
  std::vector<std::vector<double>> attributes;
  std::size_t attr_dim = 0;
  if (fs::exists(na_path)) {
    const auto rows = read_rows(na_path);
    if (rows.size() != total_nodes)
      throw IngestionError(na_path.filename().string() + " has " + std::to_string(rows.size()) +
                           " rows for " + std::to_string(total_nodes) + " nodes");
    attr_dim = rows.front().fields.size();
    for (const auto& row : rows) {
      if (row.fields.size() != attr_dim)
        throw IngestionError(na_path.filename().string() + ":" + std::to_string(row.number) +
                             ": inconsistent attribute count");
      std::vector<double> values;
      for (const auto& f : row.fields) values.push_back(parse_real(f, na_path, row.number));
      attributes.push_back(std::move(values));
    }
  }
  const bool constant = label_dim == 0 && attr_dim == 0;
  const std::size_t dim = constant ? 1 : label_dim + attr_dim;

  Dataset ds;
  ds.name = name;
  ds.feature_dim = dim;
  ds.class_count = distinct.size();
  ds.graphs.resize(graph_count);
  for (std::size_t g = 0; g < graph_count; ++g) {
    ds.graphs[g].adjacency = Matrix(graph_sizes[g], graph_sizes[g]);
    ds.graphs[g].features = Matrix(graph_sizes[g], dim);
    ds.graphs[g].label = slot_label[g];
  }
  for (std::size_t v = 0; v < total_nodes; ++v) {
    auto row = ds.graphs[node_graph[v]].features.row(node_local[v]);
    if (constant) {
      row[0] = 1.0;
      continue;
    }
    if (label_dim > 0) row[node_label_index[v]] = 1.0;
    for (std::size_t c = 0; c < attr_dim; ++c) row[label_dim + c] = attributes[v][c];
  }

  for (const auto& row : read_rows(a_path)) {
    if (row.fields.size() < 2)
      throw IngestionError(a_path.filename().string() + ":" + std::to_string(row.number) +
                           ": expected 'i, j'");
    const long long a = parse_int(row.fields[0], a_path, row.number);
    const long long b = parse_int(row.fields[1], a_path, row.number);
    if (a < 1 || b < 1 || static_cast<std::size_t>(a) > total_nodes ||
        static_cast<std::size_t>(b) > total_nodes)
      throw IngestionError(a_path.filename().string() + ":" + std::to_string(row.number) +
                           ": edge references nonexistent node");
    const std::size_t u = static_cast<std::size_t>(a - 1), w = static_cast<std::size_t>(b - 1);
    if (node_graph[u] != node_graph[w])
      throw IngestionError(a_path.filename().string() + ":" + std::to_string(row.number) +
                           ": edge joins nodes of different graphs");
    if (u == w) continue;
    Matrix& adj = ds.graphs[node_graph[u]].adjacency;
    adj(node_local[u], node_local[w]) = 1.0;
    adj(node_local[w], node_local[u]) = 1.0;
  }

  validate_dataset(ds);
  return ds;
}

void write_tudataset(const Dataset& dataset, const fs::path& directory) {
  fs::create_directories(directory);
  const std::string& name = dataset.name;
  std::ofstream a(directory / (name + "_A.txt"));
  std::ofstream ind(directory / (name + "_graph_indicator.txt"));
  std::ofstream gl(directory / (name + "_graph_labels.txt"));
  std::ofstream na(directory / (name + "_node_attributes.txt"));
  na << std::setprecision(17);
  std::size_t offset = 0;
  for (std::size_t g = 0; g < dataset.size(); ++g) {
    const Graph& graph = dataset.graphs[g];
    const std::size_t n = graph.node_count();
    for (std::size_t i = 0; i < n; ++i) {
      ind << (g + 1) << '\n';
      auto row = graph.features.row(i);
      for (std::size_t c = 0; c < row.size(); ++c) na << (c ? ", " : "") << row[c];
      na << '\n';
      for (std::size_t j = 0; j < n; ++j)
        if (graph.adjacency(i, j) != 0.0) a << (offset + i + 1) << ", " << (offset + j + 1) << '\n';
    }
    gl << graph.label << '\n';
    offset += n;
  }
}

}  // namespace poolbreaker
