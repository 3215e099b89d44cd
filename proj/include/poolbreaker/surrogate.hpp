#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "poolbreaker/graph.hpp"
#include "poolbreaker/matrix.hpp"
#include "poolbreaker/numerics.hpp"
#include "poolbreaker/training.hpp"

namespace poolbreaker {

// One convolution, one top-K pooling layer with a learned score, two linear
// layers:
//   H1 = N(A) H0 W,  S = N(A) H1 theta,
//   y  = softmax(act(readout(sel(H1) * tanh(sel(S))) V1 + b1) V2 + b2)
// with N(A) the normalized adjacency, readout the mean over kept rows and act
// an optional ReLU.
struct SurrogateParams {
  Matrix W;      // D x F
  Matrix theta;  // F x 1
  Matrix V1;     // F x F2
  Matrix V2;     // F2 x k
  Matrix b1;     // 1 x F2
  Matrix b2;     // 1 x k
  double pool_ratio = 0.5;
  bool relu = true;

  std::size_t input_dim() const noexcept { return W.rows(); }
  std::size_t hidden_f() const noexcept { return W.cols(); }
  std::size_t hidden2() const noexcept { return V1.cols(); }
  std::size_t class_count() const noexcept { return V2.cols(); }

  std::vector<Matrix*> tensors() { return {&W, &theta, &V1, &V2, &b1, &b2}; }
  bool all_finite() const noexcept;
  bool operator==(const SurrogateParams&) const = default;
};

// Throws StructuralError if the parameter shapes do not chain or the pool
// ratio is outside (0, 1].
void validate_params(const SurrogateParams& p);

struct ForwardTrace {
  NormalizedAdjacency adjacency;
  Matrix propagated;   // N(A) H0, cached for backprop
  Matrix H1;           // N x F
  Matrix smoothed;     // N(A) H1, cached for backprop
  Vector S;            // node scores
  std::vector<std::size_t> kept;  // descending score, ties by ascending index
  Vector gate;         // tanh(S) on kept nodes, aligned with `kept`
  Vector pooled;       // length F
  Vector hidden;       // pooled V1 before the activation
  Vector logits;
  Vector probs;
};

std::size_t kept_count(std::size_t nodes, double pool_ratio);

std::pair<Matrix, Vector> score_nodes(const SurrogateParams& params, const Graph& graph);

// Top max(1, ceil(ratio * N)) indices by score, ties broken by lower index.
std::vector<std::size_t> select_topk(const Vector& scores, double pool_ratio);

ForwardTrace forward(const SurrogateParams& params, const Graph& graph);
// Forward pass with a caller-chosen kept set (used to freeze selection when
// differentiating numerically).
ForwardTrace forward_with_kept(const SurrogateParams& params, const Graph& graph,
                               std::vector<std::size_t> kept);

struct SurrogateGradients {
  double loss = 0.0;
  Matrix W, theta, V1, V2, b1, b2;
};

// NLL of the graph's label and its gradient. Selection is treated as fixed.
SurrogateGradients surrogate_gradients(const SurrogateParams& params, const Graph& graph);

// Lowest class index among the maxima.
std::size_t argmax(const Vector& values);
std::size_t predict(const SurrogateParams& params, const Graph& graph);
double evaluate(const SurrogateParams& params, const std::vector<Graph>& graphs, unsigned workers = 1);

SurrogateParams init_surrogate(std::size_t input_dim, std::size_t classes, const TrainConfig& config);
SurrogateParams train_surrogate(const std::vector<Graph>& train, const std::vector<Graph>& valid,
                                std::size_t input_dim, std::size_t classes, const TrainConfig& config,
                                TrainHistory* history = nullptr);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json surrogate_to_json(const SurrogateParams& p);
SurrogateParams surrogate_from_json(const nlohmann::json& j);
void save_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace poolbreaker
