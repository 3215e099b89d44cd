#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/graph.hpp"
#include "poolbreaker/matrix.hpp"
#include "poolbreaker/parallel.hpp"
#include "poolbreaker/random.hpp"

namespace poolbreaker {

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 5e-3;
  std::uint64_t seed = 0;
  std::size_t hidden_f = 64;
  std::size_t hidden2 = 32;
  double pool_ratio = 0.5;
  std::size_t patience = 50;
  bool relu_between_linear = true;
  std::size_t levels = 2;  // hierarchical levels; target models only
  unsigned workers = 1;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> valid_accuracy;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(const std::vector<Matrix*>& params, double learning_rate);
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Full-batch training shared by the surrogate and the target models.
//
// Each epoch sums per-graph gradients (computed concurrently, reduced in index
// order), averages them and takes one Adam step. The returned parameters are
// the snapshot with the best validation accuracy; ties go to the lower mean
// validation loss. Training stops after `patience` epochs without a new best.
//
// Params must expose `std::vector<Matrix*> tensors()`. LossGrad maps
// (const Params&, const Graph&) to a pair {loss, std::vector<Matrix> grads};
// Predict maps (const Params&, const Graph&) to {predicted class, loss}.
template <typename Params, typename LossGrad, typename Predict>
Params fit(Params params, const std::vector<Graph>& train, const std::vector<Graph>& valid,
           const TrainConfig& config, LossGrad loss_grad, Predict predict,
           TrainHistory* history = nullptr) {
  if (train.empty() || valid.empty()) throw PreconditionError("training needs nonempty train and valid sets");
  Adam adam(params.tensors(), config.learning_rate);
  Params best = params;
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  TrainHistory local;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto results = parallel_map(train.size(), config.workers,
                                [&](std::size_t i) { return loss_grad(params, train[i]); });
    double loss = 0.0;
    std::vector<Matrix> total = std::move(results[0].second);
    loss += results[0].first;
    for (std::size_t i = 1; i < results.size(); ++i) {
      loss += results[i].first;
      for (std::size_t t = 0; t < total.size(); ++t) total[t] += results[i].second[t];
    }
    loss /= static_cast<double>(train.size());
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite training loss at epoch " << epoch << " (learning rate " << config.learning_rate << ")";
      throw DivergenceError(msg.str());
    }
    const double scale = 1.0 / static_cast<double>(train.size());
    for (Matrix& g : total) g = scale * g;

    // Validation is measured on the parameters that produced this epoch's loss.
    auto preds = parallel_map(valid.size(), config.workers,
                              [&](std::size_t i) { return predict(params, valid[i]); });
    std::size_t correct = 0;
    double valid_loss = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      if (preds[i].first == valid[i].label) ++correct;
      valid_loss += preds[i].second;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(valid.size());
    valid_loss /= static_cast<double>(valid.size());
    local.train_loss.push_back(loss);
    local.valid_accuracy.push_back(acc);

    if (acc > best_acc || (acc == best_acc && valid_loss < best_loss)) {
      best_acc = acc;
      best_loss = valid_loss;
      best = params;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
    adam.step(params.tensors(), total);
  }
  local.best_epoch = best_epoch;
  local.best_valid_accuracy = best_acc;
  if (history) *history = std::move(local);
  return best;
}

// Glorot-uniform initialisation.
Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace poolbreaker
