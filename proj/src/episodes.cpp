#include "gmml/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include "json.hpp"
#include <sstream>

#include "gmml/error.hpp"
#include "gmml/parallel.hpp"

namespace gmml {

namespace {

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Episode sample_episode(std::span<const LabeledSample> split, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_per_class, Rng& rng) {
  if (n_way == 0 || k_shot == 0) throw Error(ErrorCode::invalid_argument, "N and K must be positive");
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < split.size(); ++i) by_class[split[i].label].push_back(i);
  if (by_class.size() < n_way) {
    throw Error(ErrorCode::insufficient_data, "split has " + std::to_string(by_class.size()) +
                                                  " classes, episode needs " + std::to_string(n_way));
  }
  std::vector<ClassId> classes;
  classes.reserve(by_class.size());
  for (const auto& [label, members] : by_class) classes.push_back(label);

  Episode ep{n_way, k_shot, q_per_class, {}, {}, {}};
  const std::size_t per_class = k_shot + q_per_class;
  for (std::size_t c = 0; c < n_way; ++c) {
    std::swap(classes[c], classes[c + rng.index(classes.size() - c)]);
    std::vector<std::size_t>& members = by_class[classes[c]];
    if (members.size() < per_class) {
      throw Error(ErrorCode::insufficient_data,
                  "class " + std::to_string(classes[c]) + " has " + std::to_string(members.size()) +
                      " samples, episode needs " + std::to_string(per_class));
    }
    for (std::size_t s = 0; s < per_class; ++s) {
      std::swap(members[s], members[s + rng.index(members.size() - s)]);
      const LabeledSample& sample = split[members[s]];
      if (s < k_shot) {
        ep.support.push_back(sample);
      } else {
        ep.queries.push_back(sample.features);
        ep.query_truth.push_back(sample.label);
      }
    }
  }
  return ep;
}

std::vector<ClassId> nearest_mean_classify(const Episode& episode, const MlpParams& encoder, double p) {
  if (episode.support.empty()) throw Error(ErrorCode::invalid_argument, "episode has no support samples");
  std::vector<Vector> support_in;
  support_in.reserve(episode.support.size());
  for (const auto& s : episode.support) support_in.push_back(s.features);
  const std::vector<Vector> support = forward(encoder, support_in, false);
  const std::vector<Vector> queries = forward(encoder, episode.queries, false);

  std::map<ClassId, std::pair<Vector, std::size_t>> sums;
  const std::size_t dim = support.front().size();
  for (std::size_t i = 0; i < support.size(); ++i) {
    auto& [sum, count] = sums.try_emplace(episode.support[i].label, Vector(dim, 0.0), 0).first->second;
    for (std::size_t k = 0; k < dim; ++k) sum[k] += support[i][k];
    ++count;
  }
  std::vector<ClassId> ids;
  std::vector<Vector> means;
  for (auto& [label, entry] : sums) {
    for (double& v : entry.first) v /= static_cast<double>(entry.second);
    ids.push_back(label);
    means.push_back(std::move(entry.first));
  }

  std::vector<ClassId> predictions;
  predictions.reserve(queries.size());
  for (const auto& q : queries) {
    std::size_t best = 0;
    double best_d = lp_distance(q, means[0], p);
    for (std::size_t c = 1; c < means.size(); ++c) {
      const double d = lp_distance(q, means[c], p);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    predictions.push_back(ids[best]);
  }
  return predictions;
}

double confidence_halfwidth(std::span<const double> accuracies) {
  const std::size_t n = accuracies.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

EvalReport evaluate(const MlpParams& encoder, std::span<const LabeledSample> split, std::size_t n_way,
                    std::size_t k_shot, std::size_t q_per_class, std::size_t trials, double p,
                    std::uint64_t seed, unsigned threads) {
  if (trials == 0) throw Error(ErrorCode::invalid_argument, "trials must be positive");
  if (q_per_class == 0) throw Error(ErrorCode::invalid_argument, "queries per class must be positive");
  encoder.validate();
  const Rng root(seed, "episodes");
  std::vector<double> accuracy(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng = root.substream(t);
    const Episode ep = sample_episode(split, n_way, k_shot, q_per_class, rng);
    const std::vector<ClassId> predicted = nearest_mean_classify(ep, encoder, p);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == ep.query_truth[i];
    accuracy[t] = static_cast<double>(correct) / static_cast<double>(predicted.size());
  });

  EvalReport report{0.0, confidence_halfwidth(accuracy), trials, n_way, k_shot, q_per_class, p, seed};
  for (double a : accuracy) report.mean_accuracy += a;
  report.mean_accuracy /= static_cast<double>(trials);
  return report;
}

std::string to_json(const EvalReport& report) {
  const nlohmann::ordered_json j = {
      {"mean_accuracy", report.mean_accuracy}, {"ci_halfwidth", report.ci_halfwidth},
      {"trials", report.trials},               {"n_way", report.n_way},
      {"k_shot", report.k_shot},               {"q_per_class", report.q_per_class},
      {"p", report.p},                         {"seed", report.seed},
  };
  return j.dump(2);
}

std::string csv_header() { return "mean_accuracy,ci_halfwidth,trials,n_way,k_shot,q_per_class,p,seed"; }

std::string to_csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << format_real(r.mean_accuracy) << ',' << format_real(r.ci_halfwidth) << ',' << r.trials << ','
     << r.n_way << ',' << r.k_shot << ',' << r.q_per_class << ',' << format_real(r.p) << ',' << r.seed;
  return os.str();
}

}  // namespace gmml
