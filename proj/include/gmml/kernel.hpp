#pragma once

/// Numerically stable primitives shared by every loss: Lp distances, pairwise
/// distance matrices, shifted log-sum-exp and softmax over negated distances.
/// All functions are pure and use 64-bit reals.

#include <cstddef>
#include <span>
#include <vector>

namespace gmml {

using Vector = std::vector<double>;

/// Dense row-major m x n matrix of distances produced with exponent p.
struct DistanceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double p = 1.0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

/// sum_d |x_d - z_d|^p. p = 2 is the squared Euclidean norm (no root).
double lp_distance(std::span<const double> x, std::span<const double> z, double p);

/// Gradient of lp_distance(x, z, p) with respect to x, written into `out`.
/// The gradient with respect to z is the negation. Coordinates with
/// x_d == z_d get subgradient 0, which matters for p <= 1.
void lp_distance_grad(std::span<const double> x, std::span<const double> z, double p,
                      std::span<double> out);

DistanceMatrix pairwise_distances(std::span<const Vector> queries,
                                  std::span<const Vector> support, double p);

/// max(v) + log sum exp(v_i - max(v)).
double log_sum_exp(std::span<const double> v);

/// Softmax of -d, i.e. exp(-d_j) / sum_k exp(-d_k), with the minimum
/// distance subtracted before exponentiation.
Vector attention_weights(std::span<const double> distances);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

/// Logistic function 1 / (1 + exp(-x)).
double sigmoid(double x);

}  // namespace gmml
