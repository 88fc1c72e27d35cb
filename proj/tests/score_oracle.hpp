#ifndef SENET_TESTS_SCORE_ORACLE_HPP
#define SENET_TESTS_SCORE_ORACLE_HPP

// Brute-force reference scorer, written straight from the scoring
// definition and kept independent of the library implementation: it
// materializes the full 24x24 confusion-weight matrix A for each of the
// three assignments and combines them with explicit loops over index
// vectors.

#include <vector>

#include "senet/metrics.hpp"
#include "senet/record.hpp"

namespace senet::testing {

inline std::vector<std::size_t> members_of(const ClassSet& s) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (s.test(c)) out.push_back(c);
  return out;
}

inline double oracle_raw_score(const std::vector<ClassSet>& truth,
                               const std::vector<ClassSet>& pred,
                               const metrics::WeightMatrix& w) {
  double a[kNumClasses][kNumClasses] = {};
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const auto ti = members_of(truth[r]);
    const auto pi = members_of(pred[r]);
    // |truth u pred| by explicit merge
    std::vector<bool> seen(kNumClasses, false);
    std::size_t distinct = 0;
    for (auto c : ti)
      if (!seen[c]) {
        seen[c] = true;
        ++distinct;
      }
    for (auto c : pi)
      if (!seen[c]) {
        seen[c] = true;
        ++distinct;
      }
    const double n = distinct == 0 ? 1.0 : static_cast<double>(distinct);
    for (auto i : ti)
      for (auto j : pi) a[i][j] += 1.0 / n;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i)
    for (std::size_t j = 0; j < kNumClasses; ++j) total += w.values[i][j] * a[i][j];
  return total;
}

inline double oracle_challenge_score(const std::vector<ClassSet>& truth,
                                     const std::vector<ClassSet>& pred,
                                     const metrics::WeightMatrix& w,
                                     std::size_t normal_index) {
  std::vector<ClassSet> inactive(truth.size());
  for (auto& s : inactive) s.set(normal_index);
  const double observed = oracle_raw_score(truth, pred, w);
  const double correct = oracle_raw_score(truth, truth, w);
  const double lazy = oracle_raw_score(truth, inactive, w);
  return (observed - lazy) / (correct - lazy);
}

}  // namespace senet::testing

#endif  // SENET_TESTS_SCORE_ORACLE_HPP
