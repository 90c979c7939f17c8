#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gmml/losses.hpp"

namespace gmml {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view name) noexcept;

/// Labeled feature rows plus a class-level split assignment.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;  // size() x dim, row-major
  std::vector<ClassId> labels;
  std::map<ClassId, Split> splits;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  std::vector<ClassId> classes_in(Split split) const;
  std::vector<LabeledSample> samples_in(Split split) const;
  /// Throws unless every label has a split entry and every split class has samples.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitFractions {
  double train = 0.64;
  double val = 0.16;
  double test = 0.20;
};

struct SyntheticSpec {
  std::size_t classes = 100;
  std::size_t modes_per_class = 3;
  std::size_t dim = 16;
  double mode_separation = 4.0;
  double class_separation = 8.0;
  double noise_sigma = 1.0;
  std::size_t samples_per_class = 120;
  std::uint64_t seed = 0;
  SplitFractions fractions{};

  void validate() const;
};

/// Named generator settings. Currently "tri-modal-100".
std::optional<SyntheticSpec> synthetic_preset(std::string_view name);

/// Class centers ~ class_separation * N(0, I/D); each class gets
/// modes_per_class mode centers offset by mode_separation * N(0, I/D); samples
/// are assigned round-robin to modes with isotropic noise_sigma noise.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Random disjoint class-level split. Class counts are round(f * C) for train
/// and val, test takes the rest.
Dataset split_classes(Dataset dataset, const SplitFractions& fractions, std::uint64_t seed);

enum class PayloadPrecision : std::uint8_t { f32 = 4, f64 = 8 };

/// GMDS binary format: "GMDS", u32 version, u32 D, u64 m, u32 class count,
/// u8 precision (bytes per value), split table of (u32 class, u8 split),
/// row-major feature payload, u32 labels, trailing CRC-32. Little-endian.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path,
                  PayloadPrecision precision = PayloadPrecision::f64);

/// Reads a GMDS file, or a CSV fixture when the file does not start with the
/// GMDS magic. CSV layout: a header row "dim,<D>" (or just "<D>") followed by
/// rows of D features, label, split (train/val/test or 0/1/2).
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset_csv(std::string_view text);

}  // namespace gmml
