#pragma once
// Independent reference evaluations used by the unit tests. Everything here is
// written directly from the loss definitions in long double, without the
// shifted log-sum-exp or gradient-weight machinery of the library.
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "gmml/losses.hpp"

namespace oracle {

using LD = long double;

inline LD dist(const std::vector<double>& x, const std::vector<double>& z, double p) {
  LD s = 0;
  for (std::size_t k = 0; k < x.size(); ++k) s += std::pow(std::fabs(static_cast<LD>(x[k]) - z[k]), static_cast<LD>(p));
  return s;
}

inline std::vector<LD> dists(const std::vector<double>& q, const std::vector<gmml::LabeledSample>& s, double p) {
  std::vector<LD> d;
  for (const auto& x : s) d.push_back(dist(q, x.features, p));
  return d;
}

inline LD pn(const std::vector<double>& q, gmml::ClassId y, const std::vector<gmml::LabeledSample>& s, double p) {
  std::map<gmml::ClassId, std::pair<std::vector<LD>, int>> acc;
  for (const auto& x : s) {
    auto& [sum, n] = acc[x.label];
    sum.resize(x.features.size(), 0);
    for (std::size_t k = 0; k < x.features.size(); ++k) sum[k] += x.features[k];
    ++n;
  }
  LD denom = 0, own = 0;
  for (const auto& [c, entry] : acc) {
    std::vector<double> mu;
    for (LD v : entry.first) mu.push_back(static_cast<double>(v / entry.second));
    const LD d = dist(q, mu, p);
    denom += std::exp(-d);
    if (c == y) own = std::exp(-d);
  }
  return -std::log(own / denom);
}

inline LD nca(const std::vector<double>& q, gmml::ClassId y, const std::vector<gmml::LabeledSample>& s, double p) {
  const auto d = dists(q, s, p);
  LD num = 0, den = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    den += std::exp(-d[j]);
    if (s[j].label == y) num += std::exp(-d[j]);
  }
  return -std::log(num / den);
}

inline LD gm(const std::vector<double>& q, gmml::ClassId y, const std::vector<gmml::LabeledSample>& s, double p) {
  const auto d = dists(q, s, p);
  LD den = 0;
  for (LD v : d) den += std::exp(-v);
  LD sum = 0;
  int n_y = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j].label != y) continue;
    sum += -std::log(std::exp(-d[j]) / den);
    ++n_y;
  }
  return sum / n_y;
}

inline LD asl(const std::vector<double>& q, gmml::ClassId y, const std::vector<gmml::LabeledSample>& s, double p,
              double gamma_pos, double gamma_neg, double clip) {
  const auto d = dists(q, s, p);
  LD sum = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const LD prob = 1 / (1 + std::exp(d[j]));
    if (s[j].label == y) {
      sum += -std::pow(1 - prob, static_cast<LD>(gamma_pos)) * std::log(prob);
    } else {
      const LD shifted = std::max<LD>(prob - clip, 0);
      if (shifted > 0) sum += -std::pow(shifted, static_cast<LD>(gamma_neg)) * std::log(1 - shifted);
    }
  }
  return sum / s.size();
}

inline LD bce(const std::vector<double>& q, gmml::ClassId y, const std::vector<gmml::LabeledSample>& s, double p) {
  return asl(q, y, s, p, 0, 0, 0);
}

// Central finite difference of f along every coordinate of x.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + h;
    const double up = f(x);
    x[k] = keep - h;
    const double down = f(x);
    x[k] = keep;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace oracle
