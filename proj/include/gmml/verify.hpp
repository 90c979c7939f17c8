#pragma once

/// Self-contained randomized checks of the loss identities and bounds:
/// three-form equivalence, the NCA upper bound, the arithmetic-mean rewrite,
/// the within-class variance decomposition, translation invariance, gradient
/// fidelity against finite differences, the gradient weighting structure,
/// multi-hot targets and medoid attraction.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gmml/losses.hpp"
#include "gmml/rng.hpp"

namespace gmml {

struct Instance {
  Vector query;
  ClassId label = 0;
  std::vector<LabeledSample> support;
  double p = 2.0;

  SupportSet support_set() const { return SupportSet(support); }
  std::string to_json() const;
};

struct InstanceLimits {
  std::size_t max_support = 64;
  std::size_t max_dim = 32;
  std::size_t max_classes = 5;
  /// Coordinates are drawn so that no distance exceeds this value.
  double max_distance = 30.0;
};

/// Random query/support pair with the query's class present in the support.
Instance random_instance(Rng& rng, const InstanceLimits& limits, double p);

/// Relative error ||a - b|| / max(||a||, ||b||, floor).
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

enum class Fault { none, corrupt_gradient };

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// Overrides every check's default trial count when set.
  std::optional<std::size_t> trials;
  Fault fault = Fault::none;
};

struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t trials = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  /// Stable failure code, e.g. "gradient-fd-mismatch"; empty on success.
  std::string failure;
  /// Replayable JSON description of the first failing instance.
  std::string failing_instance;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  std::string to_json() const;
};

VerifyReport run_verification(const VerifyOptions& options);

}  // namespace gmml
