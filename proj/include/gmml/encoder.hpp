#pragma once

/// Multi-layer perceptron feature encoder with an optional linear projection
/// head, trained with Nesterov SGD on the leave-one-out batch loss.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gmml/kernel.hpp"
#include "gmml/losses.hpp"
#include "gmml/rng.hpp"

namespace gmml {

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  Vector bias;                  // out
  Activation activation = Activation::identity;

  double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
  double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
  friend bool operator==(const Layer&, const Layer&) = default;
};

struct MlpParams {
  std::vector<Layer> layers;
  /// When set, the last layer is the projection head, dropped at evaluation.
  bool has_head = false;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim(bool include_head) const;
  /// Throws if layer shapes do not chain or any entry is non-finite.
  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Gradient (or momentum buffer) with the same layout as MlpParams.
struct LayerGrad {
  std::vector<double> weights;
  Vector bias;
};
struct MlpGrads {
  std::vector<LayerGrad> layers;

  static MlpGrads zeros_like(const MlpParams& params);
};

struct MlpShape {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  /// 0 disables the projection head.
  std::size_t head_dim = 32;
};

/// He-style uniform initialization, bound sqrt(6 / fan_in) for rectifier
/// layers and sqrt(3 / fan_in) for linear ones; zero biases.
MlpParams init_mlp(const MlpShape& shape, Rng& rng);

/// Single identity layer of the given width, no head.
MlpParams identity_mlp(std::size_t dim);

enum class Precision : std::uint8_t { f64 = 0, f32 = 1 };

std::vector<Vector> forward(const MlpParams& params, std::span<const Vector> inputs, bool include_head,
                            Precision precision = Precision::f64);

/// Gradients of sum_m <upstream_m, forward(inputs)_m> with respect to every
/// weight and bias of the layers used by the forward pass. Head-layer
/// gradients are zero when include_head is false.
MlpGrads backward(const MlpParams& params, std::span<const Vector> inputs,
                  std::span<const Vector> upstream, bool include_head = true,
                  Precision precision = Precision::f64);

struct SgdState {
  MlpGrads velocity;
};

/// Nesterov momentum with L2 weight decay folded into the gradient:
///   g' = g + wd * w;  v = mu * v + g';  w -= lr * (g' + mu * v)
/// In f32 mode the updated parameters are rounded to single precision.
void sgd_step(MlpParams& params, const MlpGrads& grads, SgdState& state, double lr, double momentum,
              double weight_decay, Precision precision = Precision::f64);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 40;
  std::size_t warmup_epochs = 10;
  double base_lr = 0.1;
  std::size_t decay_epoch = 28;
  double decay_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LossKind loss = LossKind::gm;
  double p = 1.0;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  /// Samples drawn together from one class when packing batches.
  std::size_t samples_per_class = 4;
  AslParams asl{};
  unsigned threads = 1;

  void validate() const;
};

/// Linear warmup from base_lr / warmup_epochs to base_lr, then base_lr, then
/// base_lr / decay_factor from decay_epoch on.
double lr_schedule(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Equality over the deterministic fields (wall time excluded).
  bool same_trajectory(const TrainHistory& other) const;
};

struct TrainResult {
  MlpParams params;
  TrainHistory history;
};

/// Batches for one epoch: every sample appears once; each class in a batch
/// has at least two members. Classes are cut into groups of
/// `samples_per_class` (a trailing remainder of one joins the previous
/// group) and the shuffled groups are packed into batches of at most
/// batch_size.
std::vector<std::vector<std::size_t>> make_epoch_batches(std::span<const ClassId> labels,
                                                         std::size_t batch_size,
                                                         std::size_t samples_per_class, Rng& rng);

TrainResult train(std::span<const LabeledSample> data, MlpParams init, const TrainConfig& config);

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace gmml
