#pragma once

/// N-way K-shot episodic evaluation with a nearest-mean classifier in the
/// encoder's head-detached feature space.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gmml/encoder.hpp"
#include "gmml/losses.hpp"
#include "gmml/rng.hpp"

namespace gmml {

struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_per_class = 0;
  std::vector<LabeledSample> support;   // n_way * k_shot
  std::vector<Vector> queries;          // n_way * q_per_class
  std::vector<ClassId> query_truth;     // held out from the classifier
};

/// Picks N classes uniformly without replacement, then K + Q distinct samples
/// per class (the first K become support).
Episode sample_episode(std::span<const LabeledSample> split, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_per_class, Rng& rng);

/// Embeds with the head detached, averages support features per class and
/// assigns each query to the nearest class mean under d_p. Ties go to the
/// lowest class id.
std::vector<ClassId> nearest_mean_classify(const Episode& episode, const MlpParams& encoder, double p);

struct EvalReport {
  double mean_accuracy = 0.0;
  double ci_halfwidth = 0.0;
  std::size_t trials = 0;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_per_class = 0;
  double p = 1.0;
  std::uint64_t seed = 0;
};

/// 1.96 * sample standard deviation / sqrt(trials); 0 for a single trial.
double confidence_halfwidth(std::span<const double> accuracies);

/// Runs `trials` episodes, trial t drawing from substream t of the
/// (seed, "episodes") stream. Trials may run on `threads` workers; per-trial
/// accuracies are combined in trial order.
EvalReport evaluate(const MlpParams& encoder, std::span<const LabeledSample> split, std::size_t n_way,
                    std::size_t k_shot, std::size_t q_per_class, std::size_t trials, double p,
                    std::uint64_t seed, unsigned threads = 1);

std::string to_json(const EvalReport& report);
std::string csv_header();
std::string to_csv_row(const EvalReport& report);

}  // namespace gmml
