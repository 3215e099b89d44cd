#include "poolbreaker/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/random.hpp"

namespace poolbreaker {

using nlohmann::json;

bool SurrogateParams::all_finite() const noexcept {
  return W.all_finite() && theta.all_finite() && V1.all_finite() && V2.all_finite() &&
         b1.all_finite() && b2.all_finite() && std::isfinite(pool_ratio);
}

void validate_params(const SurrogateParams& p) {
  if (p.theta.rows() != p.W.cols() || p.theta.cols() != 1)
    throw StructuralError("surrogate theta must be F x 1");
  if (p.V1.rows() != p.W.cols()) throw StructuralError("surrogate V1 must have F rows");
  if (p.V2.rows() != p.V1.cols()) throw StructuralError("surrogate V2 must have F2 rows");
  if (p.V2.cols() == 0) throw StructuralError("surrogate needs at least one class");
  if (p.b1.rows() != 1 || p.b1.cols() != p.V1.cols()) throw StructuralError("surrogate b1 must be 1 x F2");
  if (p.b2.rows() != 1 || p.b2.cols() != p.V2.cols()) throw StructuralError("surrogate b2 must be 1 x k");
  if (!(p.pool_ratio > 0.0 && p.pool_ratio <= 1.0)) throw StructuralError("pool ratio must lie in (0, 1]");
}

std::size_t kept_count(std::size_t nodes, double pool_ratio) {
  // The small slack keeps products like 0.1 * 30 from rounding up past 3.
  const double raw = std::ceil(pool_ratio * static_cast<double>(nodes) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, std::max<std::size_t>(nodes, 1));
}

std::pair<Matrix, Vector> score_nodes(const SurrogateParams& params, const Graph& graph) {
  if (graph.feature_dim() != params.input_dim())
    throw StructuralError("graph feature dim " + std::to_string(graph.feature_dim()) +
                          " does not match surrogate input dim " + std::to_string(params.input_dim()));
  const auto norm = normalize_adjacency(graph.adjacency);
  Matrix h1 = matmul(matmul(norm.normalized, graph.features), params.W);
  const Vector theta(params.theta.values().begin(), params.theta.values().end());
  Vector s = matvec(matmul(norm.normalized, h1), theta);
  return {std::move(h1), std::move(s)};
}

std::vector<std::size_t> select_topk(const Vector& scores, double pool_ratio) {
  if (scores.empty()) throw StructuralError("select_topk on empty scores");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(kept_count(scores.size(), pool_ratio));
  return order;
}

ForwardTrace forward_with_kept(const SurrogateParams& params, const Graph& graph,
                               std::vector<std::size_t> kept) {
  validate_params(params);
  if (graph.feature_dim() != params.input_dim())
    throw StructuralError("graph feature dim " + std::to_string(graph.feature_dim()) +
                          " does not match surrogate input dim " + std::to_string(params.input_dim()));
  ForwardTrace t;
  t.adjacency = normalize_adjacency(graph.adjacency);
  t.propagated = matmul(t.adjacency.normalized, graph.features);
  t.H1 = matmul(t.propagated, params.W);
  t.smoothed = matmul(t.adjacency.normalized, t.H1);
  const Vector theta(params.theta.values().begin(), params.theta.values().end());
  t.S = matvec(t.smoothed, theta);
  t.kept = std::move(kept);
  if (t.kept.empty()) throw StructuralError("kept set is empty");

  const std::size_t f = params.hidden_f();
  t.pooled.assign(f, 0.0);
  t.gate.resize(t.kept.size());
  const double inv = 1.0 / static_cast<double>(t.kept.size());
  for (std::size_t k = 0; k < t.kept.size(); ++k) {
    const std::size_t i = t.kept[k];
    if (i >= graph.node_count()) throw StructuralError("kept index out of range");
    t.gate[k] = std::tanh(t.S[i]);
    auto row = t.H1.row(i);
    for (std::size_t c = 0; c < f; ++c) t.pooled[c] += inv * row[c] * t.gate[k];
  }

  t.hidden.assign(params.b1.values().begin(), params.b1.values().end());
  for (std::size_t c = 0; c < f; ++c)
    for (std::size_t h = 0; h < params.hidden2(); ++h) t.hidden[h] += t.pooled[c] * params.V1(c, h);
  t.logits.assign(params.b2.values().begin(), params.b2.values().end());
  for (std::size_t h = 0; h < params.hidden2(); ++h) {
    const double a = params.relu ? std::max(0.0, t.hidden[h]) : t.hidden[h];
    for (std::size_t c = 0; c < params.class_count(); ++c) t.logits[c] += a * params.V2(h, c);
  }
  t.probs = stable_softmax(t.logits);
  return t;
}

ForwardTrace forward(const SurrogateParams& params, const Graph& graph) {
  auto [h1, s] = score_nodes(params, graph);
  return forward_with_kept(params, graph, select_topk(s, params.pool_ratio));
}

SurrogateGradients surrogate_gradients(const SurrogateParams& params, const Graph& graph) {
  const ForwardTrace t = forward(params, graph);
  const std::size_t f = params.hidden_f();
  const std::size_t f2 = params.hidden2();
  const std::size_t k = params.class_count();
  if (graph.label >= k) throw StructuralError("graph label exceeds surrogate class count");

  SurrogateGradients g;
  g.loss = stable_softmax_nll(t.logits, graph.label).loss;

  Vector dlogits = t.probs;
  dlogits[graph.label] -= 1.0;

  g.b2 = Matrix(1, k);
  for (std::size_t c = 0; c < k; ++c) g.b2(0, c) = dlogits[c];
  g.V2 = Matrix(f2, k);
  Vector dhidden(f2, 0.0);
  for (std::size_t h = 0; h < f2; ++h) {
    const bool active = !params.relu || t.hidden[h] > 0.0;
    const double a = active ? t.hidden[h] : 0.0;
    double back = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      g.V2(h, c) = a * dlogits[c];
      back += params.V2(h, c) * dlogits[c];
    }
    dhidden[h] = active ? back : 0.0;
  }

  g.b1 = Matrix(1, f2);
  for (std::size_t h = 0; h < f2; ++h) g.b1(0, h) = dhidden[h];
  g.V1 = Matrix(f, f2);
  Vector dpooled(f, 0.0);
  for (std::size_t c = 0; c < f; ++c) {
    double back = 0.0;
    for (std::size_t h = 0; h < f2; ++h) {
      g.V1(c, h) = t.pooled[c] * dhidden[h];
      back += params.V1(c, h) * dhidden[h];
    }
    dpooled[c] = back;
  }

  const std::size_t n = graph.node_count();
  const double inv = 1.0 / static_cast<double>(t.kept.size());
  Matrix dH1(n, f);
  Vector dS(n, 0.0);
  for (std::size_t idx = 0; idx < t.kept.size(); ++idx) {
    const std::size_t i = t.kept[idx];
    const double gate = t.gate[idx];
    auto h1 = t.H1.row(i);
    auto d = dH1.row(i);
    double dot = 0.0;
    for (std::size_t c = 0; c < f; ++c) {
      d[c] += inv * gate * dpooled[c];
      dot += h1[c] * dpooled[c];
    }
    dS[i] = inv * dot * (1.0 - gate * gate);
  }

  // S = N(A) H1 theta: theta gets smoothed^T dS, H1 gets N(A)^T dS theta^T.
  g.theta = Matrix(f, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (dS[i] == 0.0) continue;
    auto row = t.smoothed.row(i);
    for (std::size_t c = 0; c < f; ++c) g.theta(c, 0) += row[c] * dS[i];
  }
  const Vector back = matvec(t.adjacency.normalized, dS);  // symmetric
  for (std::size_t i = 0; i < n; ++i) {
    if (back[i] == 0.0) continue;
    auto d = dH1.row(i);
    for (std::size_t c = 0; c < f; ++c) d[c] += back[i] * params.theta(c, 0);
  }
  g.W = matmul_tn(t.propagated, dH1);
  return g;
}

std::size_t argmax(const Vector& values) {
  if (values.empty()) throw StructuralError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t predict(const SurrogateParams& params, const Graph& graph) {
  return argmax(forward(params, graph).probs);
}

double evaluate(const SurrogateParams& params, const std::vector<Graph>& graphs, unsigned workers) {
  if (graphs.empty()) throw PreconditionError("evaluate on an empty collection");
  const auto hits = parallel_map(graphs.size(), workers, [&](std::size_t i) {
    return predict(params, graphs[i]) == graphs[i].label ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(hits.begin(), hits.end(), 0)) /
         static_cast<double>(graphs.size());
}

SurrogateParams init_surrogate(std::size_t input_dim, std::size_t classes, const TrainConfig& config) {
  Rng rng(config.seed);
  SurrogateParams p;
  p.W = glorot(input_dim, config.hidden_f, rng);
  p.theta = glorot(config.hidden_f, 1, rng);
  p.V1 = glorot(config.hidden_f, config.hidden2, rng);
  p.V2 = glorot(config.hidden2, classes, rng);
  p.b1 = Matrix(1, config.hidden2);
  p.b2 = Matrix(1, classes);
  p.pool_ratio = config.pool_ratio;
  p.relu = config.relu_between_linear;
  validate_params(p);
  return p;
}

SurrogateParams train_surrogate(const std::vector<Graph>& train, const std::vector<Graph>& valid,
                                std::size_t input_dim, std::size_t classes, const TrainConfig& config,
                                TrainHistory* history) {
  auto loss_grad = [](const SurrogateParams& p, const Graph& g) {
    SurrogateGradients grads = surrogate_gradients(p, g);
    std::vector<Matrix> out;
    out.reserve(6);
    for (Matrix* m : {&grads.W, &grads.theta, &grads.V1, &grads.V2, &grads.b1, &grads.b2})
      out.push_back(std::move(*m));
    return std::pair{grads.loss, std::move(out)};
  };
  auto predict_fn = [](const SurrogateParams& p, const Graph& g) {
    const ForwardTrace t = forward(p, g);
    return std::pair{argmax(t.probs), stable_softmax_nll(t.logits, g.label).loss};
  };
  return fit(init_surrogate(input_dim, classes, config), train, valid, config, loss_grad, predict_fn, history);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw DeserializationError(where + ": expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.front().size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw DeserializationError(where + "[" + std::to_string(r) + "]: ragged row");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        throw DeserializationError(where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]: not a number");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

json surrogate_to_json(const SurrogateParams& p) {
  json out;
  out["dims"] = {{"D", p.input_dim()}, {"F", p.hidden_f()}, {"F2", p.hidden2()}, {"k", p.class_count()}};
  out["poolRatio"] = p.pool_ratio;
  out["relu"] = p.relu;
  out["W"] = matrix_to_json(p.W);
  out["theta"] = matrix_to_json(p.theta);
  out["V1"] = matrix_to_json(p.V1);
  out["V2"] = matrix_to_json(p.V2);
  out["b1"] = matrix_to_json(p.b1);
  out["b2"] = matrix_to_json(p.b2);
  return out;
}

SurrogateParams surrogate_from_json(const json& j) {
  SurrogateParams p;
  try {
    p.W = matrix_from_json(j.at("W"), "W");
    p.theta = matrix_from_json(j.at("theta"), "theta");
    p.V1 = matrix_from_json(j.at("V1"), "V1");
    p.V2 = matrix_from_json(j.at("V2"), "V2");
    p.b1 = matrix_from_json(j.at("b1"), "b1");
    p.b2 = matrix_from_json(j.at("b2"), "b2");
    p.pool_ratio = j.at("poolRatio").get<double>();
    p.relu = j.value("relu", true);
    const json& dims = j.at("dims");
    if (dims.at("D").get<std::size_t>() != p.input_dim() || dims.at("F").get<std::size_t>() != p.hidden_f() ||
        dims.at("F2").get<std::size_t>() != p.hidden2() || dims.at("k").get<std::size_t>() != p.class_count())
      throw DeserializationError("dims do not match the stored matrices");
  } catch (const json::exception& e) {
    throw DeserializationError(std::string("surrogate checkpoint: ") + e.what());
  }
  try {
    validate_params(p);
  } catch (const StructuralError& e) {
    throw DeserializationError(std::string("surrogate checkpoint: ") + e.what());
  }
  return p;
}

void save_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DeserializationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DeserializationError(path.filename().string() + ": " + e.what());
  }
}

}  // namespace poolbreaker
