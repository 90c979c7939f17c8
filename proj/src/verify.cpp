#include "gmml/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

#include "gmml/kernel.hpp"
#include "json.hpp"

namespace gmml {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kFdStep = 1e-4;

Json instance_json(const Instance& inst) {
  Json support = Json::array();
  for (const auto& s : inst.support) support.push_back({{"features", s.features}, {"label", s.label}});
  return {{"query", inst.query}, {"label", inst.label}, {"p", inst.p}, {"support", support}};
}

/// Accumulates the worst error of a check and the first failing instance.
class Tracker {
 public:
  Tracker(std::string name, double tolerance, std::string failure_code)
      : start_(std::chrono::steady_clock::now()) {
    result_.name = std::move(name);
    result_.tolerance = tolerance;
    code_ = std::move(failure_code);
  }

  void record(double error, const std::function<Json()>& describe) {
    ++result_.trials;
    if (!(error <= result_.max_error)) result_.max_error = error;
    if (!(error <= result_.tolerance) && result_.passed) {
      result_.passed = false;
      result_.failure = code_;
      result_.failing_instance = describe().dump();
    }
  }
  void fail(const std::function<Json()>& describe) { record(std::numeric_limits<double>::infinity(), describe); }

  CheckResult finish() {
    result_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return std::move(result_);
  }

 private:
  CheckResult result_;
  std::string code_;
  std::chrono::steady_clock::time_point start_;
};

std::size_t in_class(const Instance& inst) {
  return static_cast<std::size_t>(std::count_if(inst.support.begin(), inst.support.end(),
                                                [&](const LabeledSample& s) { return s.label == inst.label; }));
}

double pick_p(Rng& rng) { return rng.index(2) == 0 ? 1.0 : 2.0; }

// For p = 1 the losses have kinks where coordinates tie; finite differences are
// only meaningful away from them. Rejects instances with a query/support or
// query/center coordinate gap below `margin`.
bool clear_of_kinks(const Instance& inst, double margin) {
  if (inst.p != 1.0) return true;
  const std::size_t dim = inst.query.size();
  std::vector<ClassId> classes;
  for (const auto& s : inst.support) {
    for (std::size_t k = 0; k < dim; ++k) {
      if (std::abs(inst.query[k] - s.features[k]) < margin) return false;
    }
    classes.push_back(s.label);
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (ClassId c : classes) {
    Vector mean(dim, 0.0);
    double count = 0.0;
    for (const auto& s : inst.support) {
      if (s.label != c) continue;
      count += 1.0;
      for (std::size_t k = 0; k < dim; ++k) mean[k] += s.features[k];
    }
    for (std::size_t k = 0; k < dim; ++k) {
      if (std::abs(inst.query[k] - mean[k] / count) < margin) return false;
    }
  }
  return true;
}

Instance kink_free_instance(Rng& rng, const InstanceLimits& limits, double p) {
  while (true) {
    Instance inst = random_instance(rng, limits, p);
    if (clear_of_kinks(inst, 1e-3)) return inst;
  }
}

std::size_t count_or(const VerifyOptions& o, std::size_t fallback) { return o.trials.value_or(fallback); }

CheckResult check_lp_symmetry(const VerifyOptions& o, Rng rng) {
  Tracker t("lp-symmetry", 0.0, "lp-asymmetry");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const std::size_t dim = 1 + rng.index(32);
    Vector x(dim), z(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] = rng.uniform(-10.0, 10.0);
      z[k] = rng.uniform(-10.0, 10.0);
    }
    const double p = rng.uniform(0.25, 4.0);
    const double err = std::abs(lp_distance(x, z, p) - lp_distance(z, x, p));
    t.record(err, [&] { return Json{{"x", x}, {"z", z}, {"p", p}}; });
  }
  return t.finish();
}

CheckResult check_lse_shift(const VerifyOptions& o, Rng rng) {
  Tracker t("lse-shift-invariance", 1e-12, "lse-shift-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const std::size_t n = 1 + rng.index(64);
    Vector v(n);
    for (double& x : v) x = rng.uniform(-100.0, 100.0);
    const double c = rng.uniform(-100.0, 100.0);
    Vector shifted = v;
    for (double& x : shifted) x += c;
    const double base = log_sum_exp(v);
    const double err = std::abs(log_sum_exp(shifted) - (base + c)) / (1.0 + std::abs(base));
    t.record(err, [&] { return Json{{"v", v}, {"c", c}}; });
  }
  return t.finish();
}

CheckResult check_attention(const VerifyOptions& o, Rng rng) {
  Tracker t("attention-normalization", 1e-12, "attention-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const std::size_t n = 1 + rng.index(64);
    const double scale = std::pow(10.0, rng.uniform(-2.0, 4.0));
    Vector d(n);
    for (double& x : d) x = rng.uniform(0.0, scale);
    const double c = rng.uniform(0.0, 100.0);
    Vector shifted = d;
    for (double& x : shifted) x += c;
    const Vector a = attention_weights(d);
    const Vector b = attention_weights(shifted);
    double err = std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0);
    for (std::size_t j = 0; j < n; ++j) {
      err = std::max(err, std::abs(a[j] - b[j]));
      if (!(a[j] >= 0.0 && a[j] <= 1.0)) err = std::numeric_limits<double>::infinity();
    }
    t.record(err, [&] { return Json{{"d", d}, {"shift", c}}; });
  }
  return t.finish();
}

CheckResult check_three_forms(const VerifyOptions& o, Rng rng) {
  Tracker t("three-form-equivalence", 1e-9, "three-form-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const Instance inst = random_instance(rng, {}, pick_p(rng));
    const SupportSet s = inst.support_set();
    const double canonical = gm_loss(inst.query, inst.label, s, inst.p).value;
    const double product = gm_loss_product_form(inst.query, inst.label, s, inst.p);
    const double multilabel = gm_loss_multilabel_form(inst.query, inst.label, s, inst.p);
    const double err = std::max(std::abs(canonical - product), std::abs(canonical - multilabel));
    t.record(err, [&] { return instance_json(inst); });
  }
  return t.finish();
}

double in_class_relative_spread(const Instance& inst) {
  Vector d;
  for (const auto& s : inst.support) d.push_back(lp_distance(inst.query, s.features, inst.p));
  const Vector a = attention_weights(d);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (inst.support[j].label != inst.label) continue;
    lo = std::min(lo, a[j]);
    hi = std::max(hi, a[j]);
    mean += a[j];
  }
  mean /= static_cast<double>(in_class(inst));
  return (hi - lo) / mean;
}

CheckResult check_upper_bound(const VerifyOptions& o, Rng rng) {
  Tracker t("nca-upper-bound", 1e-12, "upper-bound-violation");
  for (std::size_t i = 0; i < count_or(o, 10000); ++i) {
    const Instance inst = random_instance(rng, {}, pick_p(rng));
    const SupportSet s = inst.support_set();
    const double gm = gm_loss(inst.query, inst.label, s, inst.p).value;
    const double nca = nca_loss(inst.query, inst.label, s, inst.p).value;
    double err = std::max(0.0, nca - gm);
    // The bound is tight only against the arithmetic-mean form; it must be
    // strict away from equal attention.
    const double arith = nca_arith_mean_form(inst.query, inst.label, s, inst.p);
    if (in_class(inst) >= 2 && in_class_relative_spread(inst) >= 1e-3 && !(gm - arith > 1e-9)) {
      err = std::numeric_limits<double>::infinity();
    }
    t.record(err, [&] { return instance_json(inst); });
  }
  return t.finish();
}

CheckResult check_bound_equality(const VerifyOptions& o, Rng rng) {
  Tracker t("nca-bound-equality", 1e-9, "bound-equality-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const double p = pick_p(rng);
    Instance inst = random_instance(rng, {.max_support = 32, .max_dim = 16, .max_classes = 4, .max_distance = 20.0}, p);
    // Replace the in-class members by points at equal distance r^p from the
    // query along random signed axes.
    const double radius = rng.uniform(0.1, 2.0);
    for (auto& s : inst.support) {
      if (s.label != inst.label) continue;
      s.features = inst.query;
      const std::size_t axis = rng.index(inst.query.size());
      s.features[axis] += rng.index(2) == 0 ? radius : -radius;
    }
    const SupportSet s = inst.support_set();
    const double gm = gm_loss(inst.query, inst.label, s, p).value;
    const double arith = nca_arith_mean_form(inst.query, inst.label, s, p);
    t.record(std::abs(gm - arith), [&] { return instance_json(inst); });
  }
  return t.finish();
}

CheckResult check_nca_rewrite(const VerifyOptions& o, Rng rng) {
  Tracker t("nca-arithmetic-mean-rewrite", 1e-10, "nca-rewrite-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const Instance inst = random_instance(rng, {}, pick_p(rng));
    const SupportSet s = inst.support_set();
    const double canonical = nca_loss(inst.query, inst.label, s, inst.p).value;
    const double rewrite = nca_arith_mean_form(inst.query, inst.label, s, inst.p) -
                           std::log(static_cast<double>(in_class(inst)));
    t.record(std::abs(canonical - rewrite), [&] { return instance_json(inst); });
  }
  return t.finish();
}

CheckResult check_decomposition(const VerifyOptions& o, Rng rng) {
  Tracker t("within-class-variance-decomposition", 1e-9, "decomposition-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const Instance inst = random_instance(rng, {}, 2.0);
    const std::size_t dim = inst.query.size();
    const double n_y = static_cast<double>(in_class(inst));
    Vector mean(dim, 0.0);
    for (const auto& s : inst.support) {
      if (s.label != inst.label) continue;
      for (std::size_t k = 0; k < dim; ++k) mean[k] += s.features[k] / n_y;
    }
    double lhs = 0.0, spread = 0.0;
    for (const auto& s : inst.support) {
      if (s.label != inst.label) continue;
      lhs += lp_distance(inst.query, s.features, 2.0) / n_y;
      spread += lp_distance(s.features, mean, 2.0) / n_y;
    }
    const double rhs = lp_distance(inst.query, mean, 2.0) + spread;
    t.record(std::abs(lhs - rhs), [&] { return instance_json(inst); });
  }
  return t.finish();
}

CheckResult check_translation(const VerifyOptions& o, Rng rng) {
  Tracker t("translation-invariance", 1e-10, "translation-mismatch");
  for (std::size_t i = 0; i < count_or(o, 500); ++i) {
    Instance inst = random_instance(rng, {.max_support = 32, .max_dim = 16, .max_classes = 4, .max_distance = 20.0},
                                    pick_p(rng));
    Instance moved = inst;
    for (std::size_t k = 0; k < inst.query.size(); ++k) {
      const double c = rng.uniform(-5.0, 5.0);
      moved.query[k] += c;
      for (auto& s : moved.support) s.features[k] += c;
    }
    const SupportSet a = inst.support_set();
    const SupportSet b = moved.support_set();
    double err = 0.0;
    for (LossKind kind : kAllLossKinds) {
      const double va = compute_loss(kind, inst.query, inst.label, a, inst.p).value;
      const double vb = compute_loss(kind, moved.query, moved.label, b, moved.p).value;
      err = std::max(err, std::abs(va - vb));
    }
    t.record(err, [&] { return instance_json(inst); });
  }
  return t.finish();
}

Vector flatten(const LossOutput& out) {
  Vector flat = out.grad_query;
  for (const auto& g : out.grad_support) flat.insert(flat.end(), g.begin(), g.end());
  return flat;
}

Vector finite_difference(const Instance& inst, LossKind kind) {
  const auto value = [&](const Instance& x) {
    return compute_loss(kind, x.query, x.label, x.support_set(), x.p).value;
  };
  Vector fd;
  Instance probe = inst;
  const auto central = [&](double& coordinate) {
    const double saved = coordinate;
    coordinate = saved + kFdStep;
    const double up = value(probe);
    coordinate = saved - kFdStep;
    const double down = value(probe);
    coordinate = saved;
    fd.push_back((up - down) / (2.0 * kFdStep));
  };
  for (double& c : probe.query) central(c);
  for (auto& s : probe.support) {
    for (double& c : s.features) central(c);
  }
  return fd;
}

CheckResult check_gradients(const VerifyOptions& o, Rng rng) {
  Tracker t("gradient-fd", 1e-5, "gradient-fd-mismatch");
  const InstanceLimits small{.max_support = 8, .max_dim = 6, .max_classes = 3, .max_distance = 8.0};
  for (std::size_t i = 0; i < count_or(o, 200); ++i) {
    const Instance inst = kink_free_instance(rng, small, pick_p(rng));
    for (LossKind kind : kAllLossKinds) {
      Vector analytic = flatten(compute_loss(kind, inst.query, inst.label, inst.support_set(), inst.p));
      if (o.fault == Fault::corrupt_gradient) {
        for (double& g : analytic) g *= 1.001;
      }
      const Vector fd = finite_difference(inst, kind);
      t.record(relative_error(analytic, fd, 1e-6), [&] {
        Json j = instance_json(inst);
        j["loss"] = std::string(to_string(kind));
        return j;
      });
    }
  }
  return t.finish();
}

CheckResult check_batch_gradients(const VerifyOptions& o, Rng rng) {
  Tracker t("batch-gradient-fd", 1e-5, "gradient-fd-mismatch");
  for (std::size_t i = 0; i < count_or(o, 50); ++i) {
    const std::size_t classes = 1 + rng.index(3);
    const std::size_t dim = 1 + rng.index(4);
    std::vector<LabeledSample> batch;
    for (ClassId c = 0; c < classes; ++c) {
      const std::size_t members = 2 + rng.index(3);
      for (std::size_t m = 0; m < members; ++m) {
        Vector x(dim);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        batch.push_back({x, c});
      }
    }
    const double p = 2.0;
    for (LossKind kind : kAllLossKinds) {
      const BatchLoss analytic = batch_loss(batch, kind, p);
      Vector flat;
      for (const auto& g : analytic.grads) flat.insert(flat.end(), g.begin(), g.end());
      if (o.fault == Fault::corrupt_gradient) {
        for (double& g : flat) g *= 1.001;
      }
      Vector fd;
      auto probe = batch;
      for (auto& s : probe) {
        for (double& c : s.features) {
          const double saved = c;
          c = saved + kFdStep;
          const double up = batch_loss(probe, kind, p).value;
          c = saved - kFdStep;
          const double down = batch_loss(probe, kind, p).value;
          c = saved;
          fd.push_back((up - down) / (2.0 * kFdStep));
        }
      }
      t.record(relative_error(flat, fd, 1e-6), [&] {
        Json samples = Json::array();
        for (const auto& s : batch) samples.push_back({{"features", s.features}, {"label", s.label}});
        return Json{{"batch", samples}, {"p", p}, {"loss", std::string(to_string(kind))}};
      });
    }
  }
  return t.finish();
}

// Decomposes the canonical query gradient onto the attention Jacobian rows of
// the in-class members by least squares, recovering the per-sample weights
// c_i in grad = -(1/n_y) sum_i c_i d a_i / d x_q. The decomposition is unique
// only for p = 2: under p = 1 two members with the same sign pattern have
// parallel Jacobian rows, so there only the assembled gradients are compared.
// Coordinates stay in [-0.5, 0.5]: a member with vanishing attention has a
// vanishing Jacobian row and its coefficient is not recoverable to 1e-10.
CheckResult check_gradient_weights(const VerifyOptions& o, Rng rng) {
  Tracker t("gradient-weighting", 1e-10, "gradient-weight-mismatch");
  for (std::size_t i = 0; i < count_or(o, 200); ++i) {
    const std::size_t dim = 6 + rng.index(7);
    const std::size_t n_y = 1 + rng.index(std::min<std::size_t>(dim - 1, 5));
    const std::size_t n_out = 1 + rng.index(5);
    const double p = pick_p(rng);
    Instance inst{Vector(dim), 0, {}, p};
    for (double& v : inst.query) v = rng.uniform(-0.5, 0.5);
    for (std::size_t m = 0; m < n_y + n_out; ++m) {
      Vector x(dim);
      for (double& v : x) v = rng.uniform(-0.5, 0.5);
      inst.support.push_back({x, m < n_y ? ClassId{0} : ClassId{1}});
    }
    const SupportSet s = inst.support_set();
    const std::vector<Vector> jac = attention_jacobian(inst.query, s, p);
    Eigen::MatrixXd basis(dim, n_y);
    for (std::size_t j = 0; j < n_y; ++j) {
      for (std::size_t k = 0; k < dim; ++k) basis(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = jac[j][k];
    }
    Vector d;
    for (const auto& m : inst.support) d.push_back(lp_distance(inst.query, m.features, p));
    const Vector a = attention_weights(d);
    double mean_in = 0.0;
    for (std::size_t j = 0; j < n_y; ++j) mean_in += a[j] / static_cast<double>(n_y);

    double err = 0.0;
    for (LossKind kind : {LossKind::gm, LossKind::nca}) {
      const LossOutput out = compute_loss(kind, inst.query, 0, s, p);
      Eigen::VectorXd rhs(dim);
      for (std::size_t k = 0; k < dim; ++k) rhs(static_cast<Eigen::Index>(k)) = out.grad_query[k];
      const Eigen::VectorXd solved = basis.colPivHouseholderQr().solve(rhs);
      for (std::size_t j = 0; p == 2.0 && j < n_y; ++j) {
        const double coefficient = -static_cast<double>(n_y) * solved(static_cast<Eigen::Index>(j));
        const double expected = kind == LossKind::gm ? 1.0 / a[j] : 1.0 / mean_in;
        err = std::max(err, std::abs(coefficient - expected) / std::abs(expected));
      }
      const Vector assembled = kind == LossKind::gm ? gm_gradient_query(inst.query, 0, s, p)
                                                    : nca_gradient_query(inst.query, 0, s, p);
      err = std::max(err, relative_error(assembled, out.grad_query, 1e-4));
    }
    t.record(err, [&] { return instance_json(inst); });
  }
  return t.finish();
}

CheckResult check_multi_hot(const VerifyOptions& o, Rng rng) {
  Tracker t("multi-hot-target", 0.0, "multi-hot-mismatch");
  for (std::size_t i = 0; i < count_or(o, 1000); ++i) {
    const Instance inst = random_instance(rng, {}, 2.0);
    const MultiHotTarget target = multi_hot_target(inst.label, inst.support_set());
    const std::size_t n_y = in_class(inst);
    const double share = 1.0 / static_cast<double>(n_y);
    std::size_t nonzero = 0;
    long double sum = 0.0L;
    bool ok = target.probabilities.size() == inst.support.size();
    for (std::size_t j = 0; ok && j < target.probabilities.size(); ++j) {
      const double v = target.probabilities[j];
      sum += v;
      if (v != 0.0) ++nonzero;
      ok = inst.support[j].label == inst.label ? v == share : v == 0.0;
    }
    ok = ok && nonzero == n_y &&
         std::abs(static_cast<double>(sum) - 1.0) <= static_cast<double>(n_y) * 0x1.0p-53;
    t.record(ok ? 0.0 : 1.0, [&] { return instance_json(inst); });
  }
  return t.finish();
}

double in_class_attention_sd(const Instance& inst) {
  Vector d;
  for (const auto& s : inst.support) d.push_back(lp_distance(inst.query, s.features, inst.p));
  const Vector a = attention_weights(d);
  Vector in;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (inst.support[j].label == inst.label) in.push_back(a[j]);
  }
  const double mean = std::accumulate(in.begin(), in.end(), 0.0) / static_cast<double>(in.size());
  double ss = 0.0;
  for (double v : in) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(in.size()));
}

void descend_query(Instance& inst, std::size_t iterations, double step) {
  const SupportSet s = inst.support_set();
  for (std::size_t it = 0; it < iterations; ++it) {
    const LossOutput out = gm_loss(inst.query, inst.label, s, inst.p);
    for (std::size_t k = 0; k < inst.query.size(); ++k) inst.query[k] -= step * out.grad_query[k];
  }
}

CheckResult check_medoid(const VerifyOptions& o, Rng rng) {
  // Error is the ratio final/initial in-class attention spread; passing
  // requires at least a 50% reduction.
  Tracker t("medoid-attraction", 0.5, "medoid-attraction-failure");
  for (std::size_t i = 0; i < count_or(o, 50); ++i) {
    const std::size_t dim = 2 + rng.index(3);
    const std::size_t n_y = 3 + rng.index(4);
    const std::size_t n_out = 3 + rng.index(4);
    Instance inst{Vector(dim, 0.0), 0, {}, 2.0};
    Vector far(dim);
    for (double& v : far) v = rng.normal();
    const double norm = std::sqrt(lp_distance(far, Vector(dim, 0.0), 2.0));
    for (double& v : far) v *= 8.0 / norm;
    for (std::size_t m = 0; m < n_y + n_out; ++m) {
      Vector x(dim);
      for (std::size_t k = 0; k < dim; ++k) x[k] = 0.3 * rng.normal() + (m < n_y ? 0.0 : far[k]);
      inst.support.push_back({x, m < n_y ? ClassId{0} : ClassId{1}});
    }
    // Start off-center: from the in-class mean, 3 units toward a random
    // in-class member, so that member dominates the initial attention.
    Vector mean(dim, 0.0);
    for (std::size_t m = 0; m < n_y; ++m) {
      for (std::size_t k = 0; k < dim; ++k) mean[k] += inst.support[m].features[k] / static_cast<double>(n_y);
    }
    const Vector& pull = inst.support[rng.index(n_y)].features;
    const double pull_norm = std::sqrt(lp_distance(pull, mean, 2.0));
    for (std::size_t k = 0; k < dim; ++k) inst.query[k] = mean[k] + 3.0 * (pull[k] - mean[k]) / pull_norm;
    const double before = in_class_attention_sd(inst);
    const Json start = instance_json(inst);
    descend_query(inst, 10000, 0.05);
    const double after = in_class_attention_sd(inst);
    t.record(after / before, [&] { return start; });
  }
  return t.finish();
}

CheckResult check_medoid_symmetric(const VerifyOptions& o, Rng rng) {
  Tracker t("medoid-symmetric-equal-distances", 1e-6, "medoid-distance-mismatch");
  for (std::size_t i = 0; i < count_or(o, 20); ++i) {
    // In-class points on the signed axes of the first two coordinates, out-class
    // points on the signed third axis: the configuration is symmetric about
    // the origin, which is the minimizer.
    const double r = rng.uniform(0.5, 1.5);
    const double far = rng.uniform(1.2, 2.0);
    Instance inst{Vector(3), 0, {}, 2.0};
    for (int sign : {1, -1}) {
      inst.support.push_back({{sign * r, 0.0, 0.0}, 0});
      inst.support.push_back({{0.0, sign * r, 0.0}, 0});
      inst.support.push_back({{0.0, 0.0, sign * far}, 1});
    }
    for (double& v : inst.query) v = rng.uniform(-0.3, 0.3);
    const Json start = instance_json(inst);
    descend_query(inst, 10000, 0.05);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& s : inst.support) {
      if (s.label != 0) continue;
      const double d = lp_distance(inst.query, s.features, 2.0);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    t.record(hi - lo, [&] { return start; });
  }
  return t.finish();
}

}  // namespace

Instance random_instance(Rng& rng, const InstanceLimits& limits, double p) {
  Instance inst;
  inst.p = p;
  const std::size_t n = 1 + rng.index(limits.max_support);
  const std::size_t dim = 1 + rng.index(limits.max_dim);
  const std::size_t classes = 1 + rng.index(limits.max_classes);
  const double half = 0.5 * std::pow(limits.max_distance / static_cast<double>(dim), 1.0 / p);
  const auto draw = [&] {
    Vector x(dim);
    for (double& v : x) v = rng.uniform(-half, half);
    return x;
  };
  inst.query = draw();
  for (std::size_t j = 0; j < n; ++j) inst.support.push_back({draw(), static_cast<ClassId>(rng.index(classes))});
  inst.label = inst.support[rng.index(n)].label;
  return inst;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

std::string Instance::to_json() const { return instance_json(*this).dump(); }

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string VerifyReport::to_json() const {
  Json list = Json::array();
  for (const auto& c : checks) {
    Json j = {{"name", c.name},           {"passed", c.passed},   {"trials", c.trials},
              {"max_error", c.max_error}, {"tolerance", c.tolerance}, {"seconds", c.seconds}};
    if (!c.passed) {
      j["failure"] = c.failure;
      j["failing_instance"] = Json::parse(c.failing_instance);
    }
    list.push_back(std::move(j));
  }
  return Json{{"all_passed", all_passed()}, {"checks", list}}.dump(2);
}

VerifyReport run_verification(const VerifyOptions& options) {
  const Rng root(options.seed, "verify");
  using CheckFn = CheckResult (*)(const VerifyOptions&, Rng);
  const CheckFn checks[] = {
      check_lp_symmetry,     check_lse_shift,      check_attention,        check_three_forms,
      check_upper_bound,     check_bound_equality, check_nca_rewrite,      check_decomposition,
      check_translation,     check_gradients,      check_batch_gradients,  check_gradient_weights,
      check_multi_hot,       check_medoid,         check_medoid_symmetric,
  };
  VerifyReport report;
  std::uint64_t index = 0;
  for (CheckFn check : checks) report.checks.push_back(check(options, root.substream(index++)));
  return report;
}

}  // namespace gmml
