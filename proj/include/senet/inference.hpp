#ifndef SENET_INFERENCE_HPP
#define SENET_INFERENCE_HPP

#include <array>
#include <vector>

#include "senet/metrics.hpp"
#include "senet/model.hpp"
#include "senet/record.hpp"

namespace senet::inference {

inline constexpr std::size_t kPatchLength = 4096;
inline constexpr std::size_t kDefaultOverlap = 256;

// Number of fixed-length windows covering a signal of the given length:
// 1 for length <= 4096, otherwise ceil((L - 4096)/(4096 - O)) + 1.
std::size_t patch_count(std::size_t length, std::size_t overlap = kDefaultOverlap);

// Window offsets 0, 4096-O, 2*(4096-O), ... with the final start clamped to
// L - 4096 so the last patch ends flush with the signal.
std::vector<std::size_t> patch_starts(std::size_t length,
                                      std::size_t overlap = kDefaultOverlap);

// Each patch is exactly 12x4096; signals shorter than 4096 yield a single
// zero-padded patch.
std::vector<Signal> segment_patches(const Signal& signal,
                                    std::size_t overlap = kDefaultOverlap);

struct Prediction {
  std::array<double, kNumClasses> probabilities{};  // mean over patches (and models)
  ClassSet binary;
  std::vector<std::array<double, kNumClasses>> per_patch;  // P x 24, model-averaged
};

// class c is predicted iff p_c >= t_c; an empty set is a legal outcome
ClassSet apply_thresholds(const std::array<double, kNumClasses>& probabilities,
                          const metrics::ThresholdVector& thresholds);

// Eval-mode forward over every patch of a record already resampled to
// 257 Hz; probabilities are averaged over patches, then equally over
// models when several checkpoints are given (cross-fold ensemble).
Prediction predict_record(const std::vector<const model::Checkpoint*>& models,
                          const EcgRecord& record,
                          const metrics::ThresholdVector& thresholds);

}  // namespace senet::inference

#endif  // SENET_INFERENCE_HPP
