#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolbreaker/graph.hpp"
#include "poolbreaker/matrix.hpp"
#include "poolbreaker/numerics.hpp"
#include "poolbreaker/training.hpp"

namespace poolbreaker {

enum class TargetKind { sag, hgpsl_lite };

std::string to_string(TargetKind k);
TargetKind target_kind_from_string(const std::string& s);

// One convolution followed by top-K pooling on the induced subgraph.
struct TargetLevel {
  Matrix conv;   // F_in x F
  Matrix score;  // F x 1 for sag; empty for hgpsl-lite
  double pool_ratio = 0.5;

  bool operator==(const TargetLevel&) const = default;
};

// Multi-level hierarchical pooling classifier used as a transfer target.
//   sag:        score = N(A) C theta, kept rows gated by tanh(score)
//   hgpsl-lite: score = || C - N(A) C ||_1 per node, kept rows ungated
// Each level applies ReLU after pooling. Readout is [mean, max] over the
// last level's rows, then V1 + b1 -> ReLU -> V2 + b2 -> softmax.
struct TargetParams {
  TargetKind kind = TargetKind::sag;
  std::vector<TargetLevel> levels;
  Matrix V1;  // 2F x F2
  Matrix V2;  // F2 x k
  Matrix b1;  // 1 x F2
  Matrix b2;  // 1 x k

  std::size_t input_dim() const noexcept { return levels.empty() ? 0 : levels.front().conv.rows(); }
  std::size_t class_count() const noexcept { return V2.cols(); }

  std::vector<Matrix*> tensors();
  bool operator==(const TargetParams&) const = default;
};

void validate_params(const TargetParams& p);

struct TargetLevelTrace {
  Matrix adjacency;  // this level's input graph
  NormalizedAdjacency norm;
  Matrix input;
  Matrix propagated;  // N(A) X
  Matrix conv;        // N(A) X W
  Matrix smoothed;    // N(A) C
  Vector score;
  std::vector<std::size_t> kept;
  Vector gate;        // sag only
  Matrix pre;         // pooled rows before ReLU
  Matrix out;         // pooled rows after ReLU
};

struct TargetTrace {
  std::vector<TargetLevelTrace> levels;
  Vector readout;  // [mean | max]
  std::vector<std::size_t> max_rows;
  Vector hidden;
  Vector logits;
  Vector probs;
};

TargetTrace target_trace(const TargetParams& params, const Graph& graph);
Vector target_forward(const TargetParams& params, const Graph& graph);
std::size_t target_predict(const TargetParams& params, const Graph& graph);
double target_evaluate(const TargetParams& params, const std::vector<Graph>& graphs, unsigned workers = 1);

struct TargetGradients {
  double loss = 0.0;
  std::vector<Matrix> grads;  // aligned with TargetParams::tensors()
};

TargetGradients target_gradients(const TargetParams& params, const Graph& graph);

TargetParams init_target(TargetKind kind, std::size_t input_dim, std::size_t classes, const TrainConfig& config);
TargetParams target_train(TargetKind kind, const std::vector<Graph>& train, const std::vector<Graph>& valid,
                          std::size_t input_dim, std::size_t classes, const TrainConfig& config,
                          TrainHistory* history = nullptr);

struct TransferAccuracy {
  double original = 0.0;
  double adversarial = 0.0;
  std::optional<double> baseline;
};

// Evaluates the fixed target on the bundle's original graphs and on their
// perturbed versions (and on a baseline bundle, if given). Never retrains.
TransferAccuracy transfer_evaluate(const TargetParams& params, const AdversarialBundle& bundle,
                                   const Dataset& originals, const AdversarialBundle* baseline = nullptr,
                                   unsigned workers = 1);

nlohmann::json target_to_json(const TargetParams& p);
TargetParams target_from_json(const nlohmann::json& j);

}  // namespace poolbreaker
