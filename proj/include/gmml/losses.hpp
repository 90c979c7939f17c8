#pragma once

/// Few-shot metric losses over a query and a labeled support set.
///
/// Every loss is a function of the distances d_j = d_p(query, support_j).
/// The canonical paths (pn, nca, gm, bce, asl) return the value together with
/// analytic gradients for the query and for every support member. The
/// `*_form` functions are alternative literal evaluations of the
/// geometric-mean loss kept for cross-checking; they are not used in training.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmml/kernel.hpp"

namespace gmml {

using ClassId = std::uint32_t;

struct LabeledSample {
  Vector features;
  ClassId label = 0;
};

/// Non-empty set of labeled samples sharing one dimension.
class SupportSet {
 public:
  explicit SupportSet(std::vector<LabeledSample> samples);

  std::span<const LabeledSample> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t dim() const { return samples_.front().features.size(); }
  /// Number of samples with the given label (n_c).
  std::size_t count(ClassId label) const;
  /// Distinct labels in ascending order.
  std::vector<ClassId> classes() const;

 private:
  std::vector<LabeledSample> samples_;
};

struct LossOutput {
  double value = 0.0;
  Vector grad_query;
  std::vector<Vector> grad_support;
};

enum class LossKind { pn, nca, gm, bce, asl };

std::string_view to_string(LossKind kind) noexcept;
std::optional<LossKind> parse_loss_kind(std::string_view name) noexcept;
inline constexpr LossKind kAllLossKinds[] = {LossKind::pn, LossKind::nca, LossKind::gm,
                                             LossKind::bce, LossKind::asl};

/// Asymmetric focusing parameters (gamma+ = 0, gamma- = 4, clip 0.05 by default).
struct AslParams {
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double clip = 0.05;
};

/// Pseudo-class target: 1/n_y on samples of the query's class, 0 elsewhere.
struct MultiHotTarget {
  std::vector<double> probabilities;
};

MultiHotTarget multi_hot_target(ClassId query_label, const SupportSet& support);

// Canonical losses with gradients.
LossOutput pn_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p);
LossOutput nca_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p);
LossOutput gm_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p);
LossOutput bce_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p);
LossOutput asl_loss(const Vector& query, ClassId query_label, const SupportSet& support, double p,
                    const AslParams& params = {});

LossOutput compute_loss(LossKind kind, const Vector& query, ClassId query_label,
                        const SupportSet& support, double p, const AslParams& asl = {});

/// -log of the geometric mean of in-class attention weights, with the product
/// taken literally in extended precision. Underflows once the product drops
/// below the long double range; safe for n <= 64 and distances <= 30.
double gm_loss_product_form(const Vector& query, ClassId query_label, const SupportSet& support,
                            double p);

/// Cross-entropy between the multi-hot target and the attention weights.
double gm_loss_multilabel_form(const Vector& query, ClassId query_label, const SupportSet& support,
                               double p);

/// -log of the arithmetic mean of in-class attention weights (NCA without the
/// constant log n_y term).
double nca_arith_mean_form(const Vector& query, ClassId query_label, const SupportSet& support,
                           double p);

/// Query gradients assembled from per-sample attention derivatives:
/// -(1/n_y) sum_i c_i * d a_i / d query, with c_i = 1/a_i (gm) or the uniform
/// 1/mean(a) (nca).
Vector gm_gradient_query(const Vector& query, ClassId query_label, const SupportSet& support,
                         double p);
Vector nca_gradient_query(const Vector& query, ClassId query_label, const SupportSet& support,
                          double p);

/// Jacobian rows d a_i / d query for every support member i.
std::vector<Vector> attention_jacobian(const Vector& query, const SupportSet& support, double p);

struct BatchLoss {
  double value = 0.0;
  std::vector<Vector> grads;
};

/// Leave-one-out batch loss: the mean over members of loss(x_q | batch \ x_q),
/// with gradients for every member. Leave-one-out terms may run on `threads`
/// workers; the reduction is done in index order so the result does not
/// depend on the thread count.
BatchLoss batch_loss(std::span<const LabeledSample> batch, LossKind kind, double p,
                     const AslParams& asl = {}, unsigned threads = 1);

}  // namespace gmml
