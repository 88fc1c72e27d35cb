#ifndef SENET_METRICS_HPP
#define SENET_METRICS_HPP

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "senet/record.hpp"

namespace senet::metrics {

// 24x24 reward matrix in canonical class order; diagonal must be 1.
struct WeightMatrix {
  std::vector<std::string> class_names;
  std::array<std::array<double, kNumClasses>, kNumClasses> values{};

  static WeightMatrix identity(std::vector<std::string> names);
  static WeightMatrix load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
  void validate() const;
};

struct ThresholdVector {
  std::array<double, kNumClasses> values{};

  static ThresholdVector uniform(double t);
  static ThresholdVector load(const std::filesystem::path& file, const ClassMap& map);
  void save(const std::filesystem::path& file, const ClassMap& map) const;
  void validate() const;  // every value in [0,1]
};

// Normalized challenge score. Per record n = max(1, |truth u pred|) and each
// (i in truth, j in pred) pair adds 1/n to the confusion weight A; the raw
// score sum(W*A) is normalized so pred==truth gives 1 and pred=={normal}
// gives 0. Throws DegenerateNormalization when those two references tie.
double challenge_score(const std::vector<ClassSet>& truth,
                       const std::vector<ClassSet>& pred, const WeightMatrix& weights,
                       std::size_t normal_index);

struct ClassStats {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> sensitivity, specificity, f1;
};

struct StatsReport {
  std::array<ClassStats, kNumClasses> per_class;
  // means over classes where the ratio is defined
  std::optional<double> macro_sensitivity, macro_specificity, macro_f1;
};

StatsReport class_stats(const std::vector<ClassSet>& truth,
                        const std::vector<ClassSet>& pred);

// Two-phase constrained grid search from the probability matrix (N x 24).
// Phase 1 picks the best global threshold over {0.0,...,1.0} step 0.1 (ties:
// lowest). Phase 2 sweeps each class in ascending index order over
// {0.00,...,1.00} step 0.01 with the others fixed (ties: closest to the
// phase-1 global, then lowest), in a single pass.
ThresholdVector optimize_thresholds(
    const std::vector<std::array<double, kNumClasses>>& probabilities,
    const std::vector<ClassSet>& truth, const WeightMatrix& weights,
    std::size_t normal_index);

enum class Rating { positive, negative, unsure };

struct KappaResult {
  double kappa = 0.0;
  std::size_t n_used = 0;
  // agreement counts indexed [r1][r2] over {positive, negative, unsure}
  std::array<std::array<std::size_t, 3>, 3> table{};
};

KappaResult cohens_kappa(const std::vector<Rating>& r1, const std::vector<Rating>& r2,
                         bool exclude_unsure = true);

}  // namespace senet::metrics

#endif  // SENET_METRICS_HPP
