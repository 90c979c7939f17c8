#include "gmml/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmml/error.hpp"

namespace gmml {

namespace {

void check_exponent(double p) {
  if (!(p > 0.0) || !std::isfinite(p)) {
    throw Error(ErrorCode::invalid_argument, "distance exponent p must be positive, got " + std::to_string(p));
  }
}

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::dimension_mismatch,
                "vectors of length " + std::to_string(a) + " and " + std::to_string(b));
  }
}

double abs_pow(double diff, double p) {
  const double a = std::abs(diff);
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  return std::pow(a, p);
}

}  // namespace

double lp_distance(std::span<const double> x, std::span<const double> z, double p) {
  check_dims(x.size(), z.size());
  check_exponent(p);
  double sum = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) sum += abs_pow(x[d] - z[d], p);
  return sum;
}

void lp_distance_grad(std::span<const double> x, std::span<const double> z, double p,
                      std::span<double> out) {
  check_dims(x.size(), z.size());
  check_dims(x.size(), out.size());
  check_exponent(p);
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - z[d];
    if (diff == 0.0) {
      out[d] = 0.0;
    } else if (p == 1.0) {
      out[d] = diff > 0.0 ? 1.0 : -1.0;
    } else if (p == 2.0) {
      out[d] = 2.0 * diff;
    } else {
      out[d] = p * std::pow(std::abs(diff), p - 1.0) * (diff > 0.0 ? 1.0 : -1.0);
    }
  }
}

DistanceMatrix pairwise_distances(std::span<const Vector> queries,
                                  std::span<const Vector> support, double p) {
  check_exponent(p);
  DistanceMatrix out{queries.size(), support.size(), p, {}};
  out.values.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) {
      out.values[i * out.cols + j] = lp_distance(queries[i], support[j], p);
    }
  }
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::invalid_argument, "log_sum_exp of an empty sequence");
  const double top = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - top);
  return top + std::log(sum);
}

Vector attention_weights(std::span<const double> distances) {
  if (distances.empty()) throw Error(ErrorCode::invalid_argument, "attention over an empty support");
  const double nearest = *std::min_element(distances.begin(), distances.end());
  Vector weights(distances.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < distances.size(); ++j) {
    weights[j] = std::exp(nearest - distances[j]);
    sum += weights[j];
  }
  for (double& w : weights) w /= sum;
  return weights;
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace gmml
