#include "poolbreaker/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "poolbreaker/errors.hpp"

namespace poolbreaker {

void validate_adjacency(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) throw StructuralError("adjacency must be square");
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) throw StructuralError("adjacency has a self-loop at node " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = adjacency(i, j);
      if (a != adjacency(j, i)) throw StructuralError("adjacency is not symmetric");
      if (a != 0.0 && a != 1.0) throw StructuralError("adjacency is not binary");
    }
  }
}

NormalizedAdjacency normalize_adjacency(const Matrix& adjacency) {
  validate_adjacency(adjacency);
  const std::size_t n = adjacency.rows();
  NormalizedAdjacency out;
  out.base = adjacency;
  for (std::size_t i = 0; i < n; ++i) out.base(i, i) = 1.0;
  out.inv_sqrt_degree.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 0.0;
    for (double v : out.base.row(i)) degree += v;
    out.inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
  }
  out.normalized = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.normalized(i, j) = out.inv_sqrt_degree[i] * out.base(i, j) * out.inv_sqrt_degree[j];
  return out;
}

Vector stable_softmax(const Vector& logits) {
  if (logits.empty()) throw StructuralError("softmax of empty logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

SoftmaxNll stable_softmax_nll(const Vector& logits, std::size_t label) {
  if (logits.empty()) throw StructuralError("softmax of empty logits");
  if (label >= logits.size()) throw StructuralError("label out of range for logits");
  for (double v : logits)
    if (!std::isfinite(v)) throw NumericError("non-finite logit");
  // log-sum-exp keeps the loss finite even when prob[label] underflows.
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  SoftmaxNll out;
  out.probabilities.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    out.probabilities[i] = std::exp(logits[i] - peak) / total;
  out.loss = -(logits[label] - peak - std::log(total));
  return out;
}

double finite_difference_gradient(const std::function<double(const Matrix&)>& f,
                                  const Matrix& at, std::size_t row, std::size_t col,
                                  double step) {
  if (!(step > 0.0)) throw StructuralError("finite difference step must be positive");
  if (row >= at.rows() || col >= at.cols()) throw StructuralError("finite difference position out of range");
  Matrix probe = at;
  probe(row, col) = at(row, col) + step;
  const double up = f(probe);
  probe(row, col) = at(row, col) - step;
  const double down = f(probe);
  if (!std::isfinite(up) || !std::isfinite(down))
    throw NumericError("finite difference: function returned a non-finite value");
  return (up - down) / (2.0 * step);
}

}  // namespace poolbreaker
