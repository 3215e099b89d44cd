#include "poolbreaker/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/random.hpp"
#include "poolbreaker/surrogate.hpp"

namespace poolbreaker {

using nlohmann::json;

std::string to_string(TargetKind k) { return k == TargetKind::sag ? "sag" : "hgpsl-lite"; }

TargetKind target_kind_from_string(const std::string& s) {
  if (s == "sag") return TargetKind::sag;
  if (s == "hgpsl-lite" || s == "hgpsl") return TargetKind::hgpsl_lite;
  throw ConfigError("targets.kind", "unknown target kind '" + s + "'");
}

std::vector<Matrix*> TargetParams::tensors() {
  std::vector<Matrix*> out;
  for (auto& level : levels) {
    out.push_back(&level.conv);
    out.push_back(&level.score);
  }
  out.push_back(&V1);
  out.push_back(&V2);
  out.push_back(&b1);
  out.push_back(&b2);
  return out;
}

void validate_params(const TargetParams& p) {
  if (p.levels.size() < 2) throw StructuralError("target model needs at least two pooling levels");
  std::size_t width = p.levels.front().conv.rows();
  for (const auto& level : p.levels) {
    if (level.conv.rows() != width) throw StructuralError("target level widths do not chain");
    width = level.conv.cols();
    if (p.kind == TargetKind::sag && (level.score.rows() != width || level.score.cols() != 1))
      throw StructuralError("sag score weights must be F x 1");
    if (!(level.pool_ratio > 0.0 && level.pool_ratio <= 1.0))
      throw StructuralError("target pool ratio must lie in (0, 1]");
  }
  if (p.V1.rows() != 2 * width) throw StructuralError("target V1 must have 2F rows");
  if (p.V2.rows() != p.V1.cols() || p.V2.cols() == 0) throw StructuralError("target V2 shape mismatch");
  if (p.b1.rows() != 1 || p.b1.cols() != p.V1.cols()) throw StructuralError("target b1 must be 1 x F2");
  if (p.b2.rows() != 1 || p.b2.cols() != p.V2.cols()) throw StructuralError("target b2 must be 1 x k");
}

namespace {

Vector column_of(const Matrix& m) { return Vector(m.values().begin(), m.values().end()); }

}  // namespace

TargetTrace target_trace(const TargetParams& params, const Graph& graph) {
  validate_params(params);
  if (graph.feature_dim() != params.input_dim())
    throw StructuralError("graph feature dim does not match target input dim");
  TargetTrace t;
  Matrix adjacency = graph.adjacency;
  Matrix x = graph.features;
  for (const auto& level : params.levels) {
    TargetLevelTrace lt;
    lt.adjacency = std::move(adjacency);
    lt.norm = normalize_adjacency(lt.adjacency);
    lt.input = std::move(x);
    lt.propagated = matmul(lt.norm.normalized, lt.input);
    lt.conv = matmul(lt.propagated, level.conv);
    lt.smoothed = matmul(lt.norm.normalized, lt.conv);
    const std::size_t n = lt.conv.rows();
    const std::size_t f = lt.conv.cols();
    if (params.kind == TargetKind::sag) {
      lt.score = matvec(lt.smoothed, column_of(level.score));
    } else {
      lt.score.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < f; ++c) lt.score[i] += std::abs(lt.conv(i, c) - lt.smoothed(i, c));
    }
    lt.kept = select_topk(lt.score, level.pool_ratio);
    lt.pre = gather_rows(lt.conv, lt.kept);
    if (params.kind == TargetKind::sag) {
      lt.gate.resize(lt.kept.size());
      for (std::size_t r = 0; r < lt.kept.size(); ++r) {
        lt.gate[r] = std::tanh(lt.score[lt.kept[r]]);
        for (double& v : lt.pre.row(r)) v *= lt.gate[r];
      }
    }
    lt.out = lt.pre;
    for (double& v : lt.out.values()) v = std::max(0.0, v);
    adjacency = submatrix(lt.adjacency, lt.kept);
    x = lt.out;
    t.levels.push_back(std::move(lt));
  }

  const Matrix& last = t.levels.back().out;
  const std::size_t rows = last.rows();
  const std::size_t f = last.cols();
  t.readout.assign(2 * f, 0.0);
  t.max_rows.assign(f, 0);
  for (std::size_t c = 0; c < f; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      mean += last(r, c);
      if (last(r, c) > last(t.max_rows[c], c)) t.max_rows[c] = r;
    }
    t.readout[c] = mean / static_cast<double>(rows);
    t.readout[f + c] = last(t.max_rows[c], c);
  }
  t.hidden.assign(params.b1.values().begin(), params.b1.values().end());
  for (std::size_t a = 0; a < t.readout.size(); ++a)
    for (std::size_t h = 0; h < t.hidden.size(); ++h) t.hidden[h] += t.readout[a] * params.V1(a, h);
  t.logits.assign(params.b2.values().begin(), params.b2.values().end());
  for (std::size_t h = 0; h < t.hidden.size(); ++h) {
    const double act = std::max(0.0, t.hidden[h]);
    for (std::size_t c = 0; c < t.logits.size(); ++c) t.logits[c] += act * params.V2(h, c);
  }
  t.probs = stable_softmax(t.logits);
  return t;
}

Vector target_forward(const TargetParams& params, const Graph& graph) {
  return target_trace(params, graph).probs;
}

std::size_t target_predict(const TargetParams& params, const Graph& graph) {
  return argmax(target_forward(params, graph));
}

double target_evaluate(const TargetParams& params, const std::vector<Graph>& graphs, unsigned workers) {
  if (graphs.empty()) throw PreconditionError("evaluate on an empty collection");
  const auto hits = parallel_map(graphs.size(), workers, [&](std::size_t i) {
    return target_predict(params, graphs[i]) == graphs[i].label ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(hits.begin(), hits.end(), 0)) /
         static_cast<double>(graphs.size());
}

TargetGradients target_gradients(const TargetParams& params, const Graph& graph) {
  const TargetTrace t = target_trace(params, graph);
  const std::size_t k = params.class_count();
  if (graph.label >= k) throw StructuralError("graph label exceeds target class count");
  TargetGradients out;
  out.loss = stable_softmax_nll(t.logits, graph.label).loss;

  const std::size_t levels = params.levels.size();
  std::vector<Matrix> dconv(levels), dscore(levels);

  Vector dlogits = t.probs;
  dlogits[graph.label] -= 1.0;
  const std::size_t f2 = t.hidden.size();
  Matrix db2(1, k), db1(1, f2);
  for (std::size_t c = 0; c < k; ++c) db2(0, c) = dlogits[c];
  Matrix dV2(f2, k);
  Vector dhidden(f2, 0.0);
  for (std::size_t h = 0; h < f2; ++h) {
    const bool active = t.hidden[h] > 0.0;
    double back = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      dV2(h, c) = (active ? t.hidden[h] : 0.0) * dlogits[c];
      back += params.V2(h, c) * dlogits[c];
    }
    dhidden[h] = active ? back : 0.0;
    db1(0, h) = dhidden[h];
  }
  Matrix dV1(t.readout.size(), f2);
  Vector dreadout(t.readout.size(), 0.0);
  for (std::size_t a = 0; a < t.readout.size(); ++a) {
    double back = 0.0;
    for (std::size_t h = 0; h < f2; ++h) {
      dV1(a, h) = t.readout[a] * dhidden[h];
      back += params.V1(a, h) * dhidden[h];
    }
    dreadout[a] = back;
  }

  // Gradient w.r.t. the last level's output rows.
  const Matrix& last = t.levels.back().out;
  const std::size_t f = last.cols();
  Matrix dout(last.rows(), f);
  const double inv_rows = 1.0 / static_cast<double>(last.rows());
  for (std::size_t c = 0; c < f; ++c) {
    for (std::size_t r = 0; r < last.rows(); ++r) dout(r, c) += dreadout[c] * inv_rows;
    dout(t.max_rows[c], c) += dreadout[f + c];
  }

  for (std::size_t l = levels; l-- > 0;) {
    const TargetLevelTrace& lt = t.levels[l];
    const TargetLevel& level = params.levels[l];
    const std::size_t n = lt.conv.rows();
    const std::size_t fl = lt.conv.cols();
    Matrix dC(n, fl);
    Vector ds(n, 0.0);
    bool any_score = false;
    for (std::size_t r = 0; r < lt.kept.size(); ++r) {
      const std::size_t i = lt.kept[r];
      auto conv = lt.conv.row(i);
      auto dc = dC.row(i);
      double dot = 0.0;
      for (std::size_t c = 0; c < fl; ++c) {
        const double dpre = lt.pre(r, c) > 0.0 ? dout(r, c) : 0.0;
        if (params.kind == TargetKind::sag) {
          dc[c] += dpre * lt.gate[r];
          dot += dpre * conv[c];
        } else {
          dc[c] += dpre;
        }
      }
      if (params.kind == TargetKind::sag) {
        ds[i] = dot * (1.0 - lt.gate[r] * lt.gate[r]);
        any_score = any_score || ds[i] != 0.0;
      }
    }
    if (params.kind == TargetKind::sag) {
      dscore[l] = Matrix(fl, 1);
      for (std::size_t i = 0; i < n; ++i) {
        if (ds[i] == 0.0) continue;
        auto row = lt.smoothed.row(i);
        for (std::size_t c = 0; c < fl; ++c) dscore[l](c, 0) += row[c] * ds[i];
      }
      if (any_score) {
        const Vector back = matvec(lt.norm.normalized, ds);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < fl; ++c) dC(i, c) += back[i] * level.score(c, 0);
      }
    } else {
      dscore[l] = Matrix(level.score.rows(), level.score.cols());
    }
    dconv[l] = matmul_tn(lt.propagated, dC);
    if (l == 0) break;
    // d input = N(A)^T dC W^T; input rows are the previous level's outputs.
    dout = matmul_nt(matmul(lt.norm.normalized, dC), level.conv);
  }

  for (std::size_t l = 0; l < levels; ++l) {
    out.grads.push_back(std::move(dconv[l]));
    out.grads.push_back(std::move(dscore[l]));
  }
  out.grads.push_back(std::move(dV1));
  out.grads.push_back(std::move(dV2));
  out.grads.push_back(std::move(db1));
  out.grads.push_back(std::move(db2));
  return out;
}

TargetParams init_target(TargetKind kind, std::size_t input_dim, std::size_t classes, const TrainConfig& config) {
  if (config.levels < 2) throw ConfigError("targets.levels", "must be at least 2");
  Rng rng(config.seed);
  TargetParams p;
  p.kind = kind;
  std::size_t width = input_dim;
  for (std::size_t l = 0; l < config.levels; ++l) {
    TargetLevel level;
    level.conv = glorot(width, config.hidden_f, rng);
    level.score = kind == TargetKind::sag ? glorot(config.hidden_f, 1, rng) : Matrix();
    level.pool_ratio = config.pool_ratio;
    width = config.hidden_f;
    p.levels.push_back(std::move(level));
  }
  p.V1 = glorot(2 * width, config.hidden2, rng);
  p.V2 = glorot(config.hidden2, classes, rng);
  p.b1 = Matrix(1, config.hidden2);
  p.b2 = Matrix(1, classes);
  validate_params(p);
  return p;
}

TargetParams target_train(TargetKind kind, const std::vector<Graph>& train, const std::vector<Graph>& valid,
                          std::size_t input_dim, std::size_t classes, const TrainConfig& config,
                          TrainHistory* history) {
  auto loss_grad = [](const TargetParams& p, const Graph& g) {
    TargetGradients grads = target_gradients(p, g);
    return std::pair{grads.loss, std::move(grads.grads)};
  };
  auto predict_fn = [](const TargetParams& p, const Graph& g) {
    const TargetTrace t = target_trace(p, g);
    return std::pair{argmax(t.probs), stable_softmax_nll(t.logits, g.label).loss};
  };
  return fit(init_target(kind, input_dim, classes, config), train, valid, config, loss_grad, predict_fn,
             history);
}

TransferAccuracy transfer_evaluate(const TargetParams& params, const AdversarialBundle& bundle,
                                   const Dataset& originals, const AdversarialBundle* baseline,
                                   unsigned workers) {
  auto accuracy = [&](const AdversarialBundle& b, bool perturbed) {
    if (b.samples.empty()) throw PreconditionError("transfer evaluation on an empty bundle");
    const auto hits = parallel_map(b.samples.size(), workers, [&](std::size_t s) {
      const BundleSample& sample = b.samples[s];
      if (sample.index >= originals.size()) throw StructuralError("bundle index out of range");
      const Graph& g = perturbed ? sample.perturbed : originals.graphs[sample.index];
      return target_predict(params, g) == g.label ? 1 : 0;
    });
    return static_cast<double>(std::accumulate(hits.begin(), hits.end(), 0)) /
           static_cast<double>(b.samples.size());
  };
  TransferAccuracy out;
  out.original = accuracy(bundle, false);
  out.adversarial = accuracy(bundle, true);
  if (baseline) out.baseline = accuracy(*baseline, true);
  return out;
}

json target_to_json(const TargetParams& p) {
  json out;
  out["kind"] = to_string(p.kind);
  json levels = json::array();
  for (const auto& level : p.levels)
    levels.push_back({{"conv", matrix_to_json(level.conv)},
                      {"score", matrix_to_json(level.score)},
                      {"poolRatio", level.pool_ratio}});
  out["levels"] = std::move(levels);
  const std::size_t f = p.levels.empty() ? 0 : p.levels.back().conv.cols();
  out["dims"] = {{"D", p.input_dim()}, {"F", f}, {"F2", p.V1.cols()}, {"k", p.class_count()}};
  out["poolRatio"] = p.levels.empty() ? 0.0 : p.levels.front().pool_ratio;
  out["V1"] = matrix_to_json(p.V1);
  out["V2"] = matrix_to_json(p.V2);
  out["b1"] = matrix_to_json(p.b1);
  out["b2"] = matrix_to_json(p.b2);
  return out;
}

TargetParams target_from_json(const json& j) {
  TargetParams p;
  try {
    p.kind = target_kind_from_string(j.at("kind").get<std::string>());
    const json& levels = j.at("levels");
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const std::string at = "levels[" + std::to_string(l) + "]";
      TargetLevel level;
      level.conv = matrix_from_json(levels[l].at("conv"), at + ".conv");
      level.score = matrix_from_json(levels[l].at("score"), at + ".score");
      level.pool_ratio = levels[l].at("poolRatio").get<double>();
      p.levels.push_back(std::move(level));
    }
    p.V1 = matrix_from_json(j.at("V1"), "V1");
    p.V2 = matrix_from_json(j.at("V2"), "V2");
    p.b1 = matrix_from_json(j.at("b1"), "b1");
    p.b2 = matrix_from_json(j.at("b2"), "b2");
  } catch (const json::exception& e) {
    throw DeserializationError(std::string("target checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DeserializationError(std::string("target checkpoint: ") + e.what());
  }
  try {
    validate_params(p);
  } catch (const StructuralError& e) {
    throw DeserializationError(std::string("target checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace poolbreaker
