#include <cmath>
#include <limits>

#include "doctest.h"
#include "gmml/error.hpp"
#include "gmml/kernel.hpp"
#include "gmml/rng.hpp"

using namespace gmml;

TEST_CASE("lp distance examples") {
  CHECK(lp_distance(Vector{1, 2}, Vector{3, 4}, 2.0) == 8.0);
  CHECK(lp_distance(Vector{1, -2, 0}, Vector{0, 0, 0}, 1.0) == 3.0);
  CHECK(lp_distance(Vector{0.5}, Vector{0.5}, 3.0) == 0.0);
}

TEST_CASE("lp distance rejects bad input") {
  CHECK_THROWS_AS(lp_distance(Vector{1, 2}, Vector{1}, 2.0), Error);
  CHECK_THROWS_AS(lp_distance(Vector{1}, Vector{1}, 0.0), Error);
  try {
    lp_distance(Vector{1, 2}, Vector{1}, 2.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension_mismatch);
  }
}

TEST_CASE("lp distance symmetry and gradient") {
  Rng rng(3, "kernel-test");
  for (int t = 0; t < 100; ++t) {
    Vector x(7), z(7);
    for (auto& v : x) v = rng.uniform(-2, 2);
    for (auto& v : z) v = rng.uniform(-2, 2);
    for (double p : {1.0, 2.0, 1.5}) {
      CHECK(lp_distance(x, z, p) == lp_distance(z, x, p));
      Vector g(7);
      lp_distance_grad(x, z, p, g);
      const double h = 1e-6;
      for (std::size_t k = 0; k < 7; ++k) {
        Vector up = x, down = x;
        up[k] += h;
        down[k] -= h;
        const double fd = (lp_distance(up, z, p) - lp_distance(down, z, p)) / (2 * h);
        CHECK(std::fabs(fd - g[k]) <= 1e-6 * std::max(1.0, std::fabs(g[k])));
      }
    }
  }
}

TEST_CASE("p=1 gradient uses subgradient zero at ties") {
  Vector g(2);
  lp_distance_grad(Vector{1, 3}, Vector{1, 2}, 1.0, g);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
}

TEST_CASE("pairwise distances") {
  const std::vector<Vector> q{{0}};
  const std::vector<Vector> s{{0}, {2}};
  const DistanceMatrix m = pairwise_distances(q, s, 2.0);
  CHECK(m.rows == 1);
  CHECK(m.cols == 2);
  CHECK(m(0, 0) == 0.0);
  CHECK(m(0, 1) == 4.0);
  const std::vector<Vector> pts{{1, 2}, {-1, 0.5}, {3, 3}};
  const DistanceMatrix self = pairwise_distances(pts, pts, 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(self(i, i) == 0.0);
}

TEST_CASE("log-sum-exp") {
  CHECK(log_sum_exp(Vector{5, 5}) == doctest::Approx(5.6931471805599453).epsilon(1e-15));
  CHECK(log_sum_exp(Vector{1000, 1000}) == doctest::Approx(1000 + std::log(2.0)).epsilon(1e-15));
  CHECK(std::isfinite(log_sum_exp(Vector{-1000, -1001})));
  CHECK_THROWS_AS(log_sum_exp(Vector{}), Error);
  Rng rng(1, "lse");
  for (int t = 0; t < 200; ++t) {
    Vector v(6);
    for (auto& x : v) x = rng.uniform(-30, 30);
    const double c = rng.uniform(-500, 500);
    Vector shifted = v;
    for (auto& x : shifted) x += c;
    CHECK(std::fabs(log_sum_exp(shifted) - (log_sum_exp(v) + c)) <= 1e-12 * std::max(1.0, std::fabs(c)));
  }
}

TEST_CASE("attention weights") {
  const Vector a = attention_weights(Vector{0, 4});
  CHECK(a[0] == doctest::Approx(0.98201379003790844).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.017986209962091558).epsilon(1e-14));
  const Vector far = attention_weights(Vector{1e4, 1e4 + 1});
  CHECK(std::isfinite(far[0]));
  CHECK(far[0] + far[1] == doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(2, "attn");
  for (int t = 0; t < 200; ++t) {
    Vector d(1 + rng.index(40));
    for (auto& x : d) x = rng.uniform(0, 50);
    const Vector w = attention_weights(d);
    double sum = 0;
    for (double x : w) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softplus and sigmoid") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}
