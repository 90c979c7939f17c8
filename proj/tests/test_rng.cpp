#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gmml/rng.hpp"

using gmml::Rng;

TEST_CASE("streams are reproducible and purpose-separated") {
  Rng a(42, "data"), b(42, "data"), c(42, "split"), d(43, "data");
  bool differs_purpose = false, differs_seed = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs_purpose = differs_purpose || x != c.next();
    differs_seed = differs_seed || x != d.next();
  }
  CHECK(differs_purpose);
  CHECK(differs_seed);
}

TEST_CASE("substreams do not advance the parent") {
  Rng a(7, "episodes");
  Rng b = a;
  Rng child = a.substream(3);
  CHECK(a.next() == b.next());
  CHECK(child.next() == Rng(7, "episodes").substream(3).next());
  CHECK(a.substream(1).next() != a.substream(2).next());
}

TEST_CASE("uniform, index and normal ranges") {
  Rng r(1, "ranges");
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.index(7) < 7u);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("shuffle is a permutation") {
  Rng r(5, "shuffle");
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK_FALSE(std::is_sorted(v.begin(), v.end()));
}
