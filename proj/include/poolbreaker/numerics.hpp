#pragma once

#include <cstddef>
#include <functional>

#include "poolbreaker/matrix.hpp"

namespace poolbreaker {

// Kipf-style symmetric normalization of A + I.
struct NormalizedAdjacency {
  Matrix base;            // A + I
  Vector inv_sqrt_degree; // (row sums of base)^(-1/2)
  Matrix normalized;      // D^-1/2 (A + I) D^-1/2
};

// Requires a square, symmetric, {0,1}-valued adjacency with zero diagonal.
NormalizedAdjacency normalize_adjacency(const Matrix& adjacency);

// Throws StructuralError unless `adjacency` is a valid simple undirected graph.
void validate_adjacency(const Matrix& adjacency);

struct SoftmaxNll {
  Vector probabilities;
  double loss = 0.0;
};

SoftmaxNll stable_softmax_nll(const Vector& logits, std::size_t label);
Vector stable_softmax(const Vector& logits);

// Central difference (f(x+h) - f(x-h)) / 2h in entry (row, col) of `at`.
double finite_difference_gradient(const std::function<double(const Matrix&)>& f,
                                  const Matrix& at, std::size_t row, std::size_t col,
                                  double step);

}  // namespace poolbreaker
