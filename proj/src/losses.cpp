#include "gmml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmml/error.hpp"
#include "gmml/parallel.hpp"

namespace gmml {

namespace {

// Borrowed view of a support set; lets the leave-one-out batch loss reuse the
// per-query kernels without copying feature vectors.
struct SupportView {
  std::vector<const Vector*> features;
  std::vector<ClassId> labels;

  std::size_t size() const { return features.size(); }
};

SupportView view_of(const SupportSet& support) {
  SupportView view;
  view.features.reserve(support.size());
  view.labels.reserve(support.size());
  for (const auto& s : support.samples()) {
    view.features.push_back(&s.features);
    view.labels.push_back(s.label);
  }
  return view;
}

std::size_t class_count(const SupportView& view, ClassId label) {
  return static_cast<std::size_t>(std::count(view.labels.begin(), view.labels.end(), label));
}

/// Validates the query against the support and returns n_y.
std::size_t check_query(const Vector& query, ClassId label, const SupportView& view) {
  const std::size_t dim = view.features.front()->size();
  if (query.size() != dim) {
    throw Error(ErrorCode::dimension_mismatch, "query has dimension " + std::to_string(query.size()) +
                                                   ", support has " + std::to_string(dim));
  }
  const std::size_t n_y = class_count(view, label);
  if (n_y == 0) {
    throw Error(ErrorCode::class_not_represented,
                "query class " + std::to_string(label) + " has no support samples");
  }
  return n_y;
}

Vector distances_to(const Vector& query, const SupportView& view, double p) {
  Vector d(view.size());
  for (std::size_t j = 0; j < view.size(); ++j) d[j] = lp_distance(query, *view.features[j], p);
  return d;
}

/// Chain rule from dl/dd_j to the query and support members:
/// grad_query = sum_j w_j grad d_j, grad_support_j = -w_j grad d_j.
void distribute(const Vector& query, const SupportView& view, double p, std::span<const double> w,
                LossOutput& out) {
  const std::size_t dim = query.size();
  out.grad_query.assign(dim, 0.0);
  out.grad_support.assign(view.size(), Vector(dim, 0.0));
  Vector g(dim);
  for (std::size_t j = 0; j < view.size(); ++j) {
    lp_distance_grad(query, *view.features[j], p, g);
    for (std::size_t d = 0; d < dim; ++d) {
      out.grad_query[d] += w[j] * g[d];
      out.grad_support[j][d] = -w[j] * g[d];
    }
  }
}

LossOutput nca_core(const Vector& query, ClassId label, const SupportView& view, double p) {
  const std::size_t n_y = check_query(query, label, view);
  const Vector d = distances_to(query, view, p);
  Vector neg_all(d.size());
  Vector neg_in;
  neg_in.reserve(n_y);
  for (std::size_t j = 0; j < d.size(); ++j) {
    neg_all[j] = -d[j];
    if (view.labels[j] == label) neg_in.push_back(-d[j]);
  }
  const double lse_in = log_sum_exp(neg_in);
  const double lse_all = log_sum_exp(neg_all);

  LossOutput out;
  out.value = lse_all - lse_in;
  Vector w(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double global = std::exp(-d[j] - lse_all);
    const double local = view.labels[j] == label ? std::exp(-d[j] - lse_in) : 0.0;
    w[j] = local - global;
  }
  distribute(query, view, p, w, out);
  return out;
}

LossOutput gm_core(const Vector& query, ClassId label, const SupportView& view, double p) {
  const std::size_t n_y = check_query(query, label, view);
  const Vector d = distances_to(query, view, p);
  Vector neg_all(d.size());
  double in_sum = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    neg_all[j] = -d[j];
    if (view.labels[j] == label) in_sum += d[j];
  }
  const double inv_n_y = 1.0 / static_cast<double>(n_y);
  const double lse_all = log_sum_exp(neg_all);

  LossOutput out;
  out.value = in_sum * inv_n_y + lse_all;
  Vector w(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    w[j] = (view.labels[j] == label ? inv_n_y : 0.0) - std::exp(-d[j] - lse_all);
  }
  distribute(query, view, p, w, out);
  return out;
}

// BCE on pseudo-class logits -d_j with probabilities q_j = sigmoid(-d_j):
// positives contribute softplus(d_j) = -log q_j, negatives softplus(-d_j).
LossOutput bce_core(const Vector& query, ClassId label, const SupportView& view, double p) {
  check_query(query, label, view);
  const Vector d = distances_to(query, view, p);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  LossOutput out;
  Vector w(d.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (view.labels[j] == label) {
      sum += softplus(d[j]);
      w[j] = sigmoid(d[j]) * inv_n;
    } else {
      sum += softplus(-d[j]);
      w[j] = -sigmoid(-d[j]) * inv_n;
    }
  }
  out.value = sum * inv_n;
  distribute(query, view, p, w, out);
  return out;
}

void check_asl(const AslParams& params) {
  if (!(params.gamma_pos >= 0.0) || !(params.gamma_neg >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "ASL focusing exponents must be nonnegative");
  }
  if (!(params.clip >= 0.0 && params.clip < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "ASL probability clip must lie in [0, 1)");
  }
}

// Positive term: -(1-q)^g+ log q. Negative term: -(q_m)^g- log(1-q_m) with the
// shifted probability q_m = max(q - m, 0). Derivatives are taken with respect
// to d using dq/dd = -q(1-q). With zero focusing and clip this reduces to BCE
// term by term, including the gradient expressions.
LossOutput asl_core(const Vector& query, ClassId label, const SupportView& view, double p,
                    const AslParams& params) {
  check_asl(params);
  check_query(query, label, view);
  const Vector d = distances_to(query, view, p);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  LossOutput out;
  Vector w(d.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double q = sigmoid(-d[j]);
    const double q_bar = sigmoid(d[j]);  // 1 - q
    if (view.labels[j] == label) {
      const double gamma = params.gamma_pos;
      const double log_q = -softplus(d[j]);
      const double focus = std::pow(q_bar, gamma);
      sum += -focus * log_q;
      w[j] = (-gamma * q * focus * log_q + std::pow(q_bar, gamma + 1.0)) * inv_n;
    } else {
      const double gamma = params.gamma_neg;
      double q_m = q;
      double log_rest = -softplus(-d[j]);  // log(1 - q)
      double rest = q_bar;
      if (params.clip > 0.0) {
        q_m = std::max(q - params.clip, 0.0);
        rest = 1.0 - q_m;
        log_rest = std::log1p(-q_m);
      }
      if (q_m > 0.0) {
        const double focus = std::pow(q_m, gamma);
        sum += -focus * log_rest;
        // dL/dq_m = -g q_m^(g-1) log(1-q_m) + q_m^g / (1-q_m); dq_m/dd = -q(1-q).
        const double dl_dqm = -gamma * std::pow(q_m, gamma - 1.0) * log_rest + focus / rest;
        w[j] = (params.clip > 0.0 ? -dl_dqm * q * q_bar
                                  : gamma * focus * q_bar * log_rest - std::pow(q, gamma + 1.0)) *
               inv_n;
      } else {
        w[j] = 0.0;
      }
    }
  }
  out.value = sum * inv_n;
  distribute(query, view, p, w, out);
  return out;
}

// Prototype loss: softmax over class centers. The center of class c receives
// dl/dd_c = [c == y] - pi_c and passes 1/n_c of it to each member.
LossOutput pn_core(const Vector& query, ClassId label, const SupportView& view, double p) {
  check_query(query, label, view);
  const std::size_t dim = query.size();
  std::vector<ClassId> classes = view.labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const auto slot = [&](ClassId c) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), c) - classes.begin());
  };

  std::vector<Vector> centers(classes.size(), Vector(dim, 0.0));
  std::vector<std::size_t> counts(classes.size(), 0);
  for (std::size_t j = 0; j < view.size(); ++j) {
    const std::size_t c = slot(view.labels[j]);
    ++counts[c];
    const Vector& x = *view.features[j];
    for (std::size_t k = 0; k < dim; ++k) centers[c][k] += x[k];
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (double& v : centers[c]) v /= static_cast<double>(counts[c]);
  }

  Vector neg(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) neg[c] = -lp_distance(query, centers[c], p);
  const double lse = log_sum_exp(neg);
  const std::size_t target = slot(label);

  LossOutput out;
  out.value = lse - neg[target];
  out.grad_query.assign(dim, 0.0);
  std::vector<Vector> center_grad(classes.size(), Vector(dim, 0.0));
  Vector g(dim);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const double w = (c == target ? 1.0 : 0.0) - std::exp(neg[c] - lse);
    lp_distance_grad(query, centers[c], p, g);
    for (std::size_t k = 0; k < dim; ++k) {
      out.grad_query[k] += w * g[k];
      center_grad[c][k] = -w * g[k] / static_cast<double>(counts[c]);
    }
  }
  out.grad_support.resize(view.size());
  for (std::size_t j = 0; j < view.size(); ++j) out.grad_support[j] = center_grad[slot(view.labels[j])];
  return out;
}

LossOutput loss_core(LossKind kind, const Vector& query, ClassId label, const SupportView& view,
                     double p, const AslParams& asl) {
  switch (kind) {
    case LossKind::pn: return pn_core(query, label, view, p);
    case LossKind::nca: return nca_core(query, label, view, p);
    case LossKind::gm: return gm_core(query, label, view, p);
    case LossKind::bce: return bce_core(query, label, view, p);
    case LossKind::asl: return asl_core(query, label, view, p, asl);
  }
  throw Error(ErrorCode::invalid_argument, "unknown loss kind");
}

}  // namespace

SupportSet::SupportSet(std::vector<LabeledSample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw Error(ErrorCode::invalid_argument, "support set must be non-empty");
  const std::size_t dim = samples_.front().features.size();
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "feature dimension must be at least 1");
  for (const auto& s : samples_) {
    if (s.features.size() != dim) {
      throw Error(ErrorCode::dimension_mismatch, "support samples have differing dimensions");
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "support features must be finite");
    }
  }
}

std::size_t SupportSet::count(ClassId label) const {
  return static_cast<std::size_t>(std::count_if(samples_.begin(), samples_.end(),
                                                [&](const LabeledSample& s) { return s.label == label; }));
}

std::vector<ClassId> SupportSet::classes() const {
  std::vector<ClassId> out;
  for (const auto& s : samples_) out.push_back(s.label);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::pn: return "pn";
    case LossKind::nca: return "nca";
    case LossKind::gm: return "gm";
    case LossKind::bce: return "bce";
    case LossKind::asl: return "asl";
  }
  return "?";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) noexcept {
  for (LossKind kind : kAllLossKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

MultiHotTarget multi_hot_target(ClassId query_label, const SupportSet& support) {
  const std::size_t n_y = support.count(query_label);
  if (n_y == 0) {
    throw Error(ErrorCode::class_not_represented,
                "query class " + std::to_string(query_label) + " has no support samples");
  }
  MultiHotTarget target;
  target.probabilities.reserve(support.size());
  for (const auto& s : support.samples()) {
    target.probabilities.push_back(s.label == query_label ? 1.0 / static_cast<double>(n_y) : 0.0);
  }
  return target;
}

LossOutput pn_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p) {
  return pn_core(query, query_label, view_of(support), p);
}

LossOutput nca_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p) {
  return nca_core(query, query_label, view_of(support), p);
}

LossOutput gm_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p) {
  return gm_core(query, query_label, view_of(support), p);
}

LossOutput bce_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p) {
  return bce_core(query, query_label, view_of(support), p);
}

LossOutput asl_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p,
                    const AslParams& params) {
  return asl_core(query, query_label, view_of(support), p, params);
}

LossOutput compute_loss(LossKind kind, const Vector& query, ClassId query_label,
                        const SupportSet& support, double p, const AslParams& asl) {
  return loss_core(kind, query, query_label, view_of(support), p, asl);
}

double gm_loss_product_form(const Vector& query, ClassId query_label, const SupportSet& support,
                            double p) {
  const SupportView view = view_of(support);
  const std::size_t n_y = check_query(query, query_label, view);
  const Vector d = distances_to(query, view, p);
  long double denom = 0.0L;
  for (double dj : d) denom += std::exp(-static_cast<long double>(dj));
  long double product = 1.0L;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (view.labels[i] == query_label) product *= std::exp(-static_cast<long double>(d[i])) / denom;
  }
  return static_cast<double>(-std::log(std::pow(product, 1.0L / static_cast<long double>(n_y))));
}

double gm_loss_multilabel_form(const Vector& query, ClassId query_label, const SupportSet& support,
                               double p) {
  const SupportView view = view_of(support);
  check_query(query, query_label, view);
  const MultiHotTarget target = multi_hot_target(query_label, support);
  const Vector a = attention_weights(distances_to(query, view, p));
  double ce = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (target.probabilities[j] > 0.0) ce -= target.probabilities[j] * std::log(a[j]);
  }
  return ce;
}

double nca_arith_mean_form(const Vector& query, ClassId query_label, const SupportSet& support,
                           double p) {
  const SupportView view = view_of(support);
  const std::size_t n_y = check_query(query, query_label, view);
  const Vector a = attention_weights(distances_to(query, view, p));
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (view.labels[j] == query_label) sum += a[j];
  }
  return -std::log(sum / static_cast<double>(n_y));
}

std::vector<Vector> attention_jacobian(const Vector& query, const SupportSet& support, double p) {
  const SupportView view = view_of(support);
  if (query.size() != support.dim()) {
    throw Error(ErrorCode::dimension_mismatch, "query and support dimensions differ");
  }
  const std::size_t dim = query.size();
  const Vector a = attention_weights(distances_to(query, view, p));
  std::vector<Vector> grads(view.size(), Vector(dim));
  Vector mean_grad(dim, 0.0);
  for (std::size_t j = 0; j < view.size(); ++j) {
    lp_distance_grad(query, *view.features[j], p, grads[j]);
    for (std::size_t k = 0; k < dim; ++k) mean_grad[k] += a[j] * grads[j][k];
  }
  // d a_i / d x = a_i (-grad d_i + sum_j a_j grad d_j)
  std::vector<Vector> jac(view.size(), Vector(dim));
  for (std::size_t i = 0; i < view.size(); ++i) {
    for (std::size_t k = 0; k < dim; ++k) jac[i][k] = a[i] * (mean_grad[k] - grads[i][k]);
  }
  return jac;
}

namespace {

Vector weighted_attention_gradient(const Vector& query, ClassId label, const SupportSet& support,
                                   double p, bool uniform) {
  const SupportView view = view_of(support);
  const std::size_t n_y = check_query(query, label, view);
  const Vector a = attention_weights(distances_to(query, view, p));
  const std::vector<Vector> jac = attention_jacobian(query, support, p);
  double mean_in = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (view.labels[i] == label) mean_in += a[i];
  }
  mean_in /= static_cast<double>(n_y);
  Vector grad(query.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (view.labels[i] != label) continue;
    const double coefficient = uniform ? 1.0 / mean_in : 1.0 / a[i];
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += coefficient * jac[i][k];
  }
  for (double& g : grad) g *= -1.0 / static_cast<double>(n_y);
  return grad;
}

}  // namespace

Vector gm_gradient_query(const Vector& query, ClassId query_label, const SupportSet& support,
                         double p) {
  return weighted_attention_gradient(query, query_label, support, p, false);
}

Vector nca_gradient_query(const Vector& query, ClassId query_label, const SupportSet& support,
                          double p) {
  return weighted_attention_gradient(query, query_label, support, p, true);
}

BatchLoss batch_loss(std::span<const LabeledSample> batch, LossKind kind, double p,
                     const AslParams& asl, unsigned threads) {
  const std::size_t n = batch.size();
  if (n < 2) throw Error(ErrorCode::invalid_argument, "batch needs at least 2 samples");
  const std::size_t dim = batch.front().features.size();
  for (const auto& s : batch) {
    if (s.features.size() != dim) throw Error(ErrorCode::dimension_mismatch, "batch samples have differing dimensions");
  }
  {
    std::vector<ClassId> labels;
    for (const auto& s : batch) labels.push_back(s.label);
    std::sort(labels.begin(), labels.end());
    for (std::size_t i = 0; i < n; ++i) {
      const bool alone = (i == 0 || labels[i - 1] != labels[i]) && (i + 1 == n || labels[i + 1] != labels[i]);
      if (alone) {
        throw Error(ErrorCode::singleton_class,
                    "class " + std::to_string(labels[i]) + " has a single sample in the batch");
      }
    }
  }

  std::vector<LossOutput> terms(n);
  parallel_for(n, threads, [&](std::size_t q) {
    SupportView view;
    view.features.reserve(n - 1);
    view.labels.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q) continue;
      view.features.push_back(&batch[j].features);
      view.labels.push_back(batch[j].label);
    }
    terms[q] = loss_core(kind, batch[q].features, batch[q].label, view, p, asl);
  });

  BatchLoss out;
  out.grads.assign(n, Vector(dim, 0.0));
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const LossOutput& t = terms[q];
    sum += t.value;
    for (std::size_t k = 0; k < dim; ++k) out.grads[q][k] += t.grad_query[k] * inv_n;
    for (std::size_t j = 0, s = 0; j < n; ++j) {
      if (j == q) continue;
      for (std::size_t k = 0; k < dim; ++k) out.grads[j][k] += t.grad_support[s][k] * inv_n;
      ++s;
    }
  }
  out.value = sum * inv_n;
  return out;
}

}  // namespace gmml
