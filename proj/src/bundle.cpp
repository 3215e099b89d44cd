#include <fstream>
#include <sstream>

#include <json.hpp>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/graph.hpp"

namespace poolbreaker {

using nlohmann::json;

namespace {

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

json sample_to_json(const BundleSample& s) {
  const Graph& g = s.perturbed;
  json edges = json::array();
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (std::size_t j = i + 1; j < g.node_count(); ++j)
      if (g.adjacency(i, j) != 0.0) edges.push_back({i, j});
  json edits = json::array();
  for (const Edit& e : s.edits) {
    json item;
    item["kind"] = to_string(e.kind);
    item["target"] = e.target;
    item["other"] = e.other ? json(*e.other) : json(nullptr);
    item["delta"] = e.delta ? json(*e.delta) : json(nullptr);
    edits.push_back(std::move(item));
  }
  json out;
  out["index"] = s.index;
  out["nodes"] = g.node_count();
  out["edges"] = std::move(edges);
  out["features"] = matrix_rows(g.features);
  out["label"] = g.label;
  out["edits"] = std::move(edits);
  out["budgets"] = {{"edit", s.budgets.edit_ratio},
                    {"deltacon", s.budgets.deltacon},
                    {"featL1", s.budgets.feature_l1}};
  return out;
}

// Wraps field access so failures carry the JSON path of the bad value.
template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw DeserializationError(where + "." + key + ": missing field");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DeserializationError(where + "." + key + ": " + e.what());
  }
}

BundleSample sample_from_json(const json& j, const std::string& where) {
  BundleSample s;
  s.index = field<std::size_t>(j, "index", where);
  const auto nodes = field<std::size_t>(j, "nodes", where);
  const auto edges = field<std::vector<std::vector<std::size_t>>>(j, "edges", where);
  const auto features = field<std::vector<std::vector<double>>>(j, "features", where);
  if (features.size() != nodes) throw DeserializationError(where + ".features: expected " + std::to_string(nodes) + " rows");
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  Matrix h(nodes, dim);
  for (std::size_t r = 0; r < nodes; ++r) {
    if (features[r].size() != dim) throw DeserializationError(where + ".features[" + std::to_string(r) + "]: ragged row");
    for (std::size_t c = 0; c < dim; ++c) h(r, c) = features[r][c];
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].size() != 2 || edges[e][0] >= nodes || edges[e][1] >= nodes || edges[e][0] == edges[e][1])
      throw DeserializationError(where + ".edges[" + std::to_string(e) + "]: invalid edge");
    pairs.emplace_back(edges[e][0], edges[e][1]);
  }
  try {
    s.perturbed = make_graph(nodes, pairs, std::move(h), field<std::size_t>(j, "label", where));
  } catch (const StructuralError& e) {
    throw DeserializationError(where + ": " + e.what());
  }

  if (!j.contains("edits") || !j.at("edits").is_array())
    throw DeserializationError(where + ".edits: missing or not an array");
  const json& edits = j.at("edits");
  for (std::size_t k = 0; k < edits.size(); ++k) {
    const std::string at = where + ".edits[" + std::to_string(k) + "]";
    const json& item = edits[k];
    Edit e;
    try {
      e.kind = edit_kind_from_string(field<std::string>(item, "kind", at));
    } catch (const StructuralError& err) {
      throw DeserializationError(at + ".kind: " + err.what());
    }
    e.target = field<std::size_t>(item, "target", at);
    if (item.contains("other") && !item.at("other").is_null()) e.other = field<std::size_t>(item, "other", at);
    if (item.contains("delta") && !item.at("delta").is_null()) e.delta = field<Vector>(item, "delta", at);
    s.edits.push_back(std::move(e));
  }
  const std::string bw = where + ".budgets";
  if (!j.contains("budgets")) throw DeserializationError(bw + ": missing field");
  const json& b = j.at("budgets");
  s.budgets.edit_ratio = field<double>(b, "edit", bw);
  s.budgets.deltacon = field<double>(b, "deltacon", bw);
  s.budgets.feature_l1 = field<double>(b, "featL1", bw);
  return s;
}

}  // namespace

std::string bundle_to_json(const AdversarialBundle& bundle) {
  json out;
  out["dataset"] = bundle.dataset;
  out["split"] = to_string(bundle.split);
  json samples = json::array();
  for (const auto& s : bundle.samples) samples.push_back(sample_to_json(s));
  out["samples"] = std::move(samples);
  return out.dump(1);
}

AdversarialBundle bundle_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DeserializationError(std::string("bundle: ") + e.what());
  }
  AdversarialBundle bundle;
  bundle.dataset = field<std::string>(root, "dataset", "$");
  try {
    bundle.split = partition_from_string(field<std::string>(root, "split", "$"));
  } catch (const StructuralError& e) {
    throw DeserializationError(std::string("$.split: ") + e.what());
  }
  if (!root.contains("samples") || !root.at("samples").is_array())
    throw DeserializationError("$.samples: missing or not an array");
  const json& samples = root.at("samples");
  for (std::size_t i = 0; i < samples.size(); ++i)
    bundle.samples.push_back(sample_from_json(samples[i], "$.samples[" + std::to_string(i) + "]"));
  return bundle;
}

void write_bundle(const AdversarialBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << bundle_to_json(bundle) << '\n';
}

AdversarialBundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DeserializationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return bundle_from_json(ss.str());
}

}  // namespace poolbreaker
