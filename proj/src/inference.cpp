#include "senet/inference.hpp"

#include <algorithm>

#include "senet/errors.hpp"
#include "senet/preprocess.hpp"

namespace senet::inference {

std::size_t patch_count(std::size_t length, std::size_t overlap) {
  if (length < 1) throw DataError("patch_count: empty signal");
  if (overlap >= kPatchLength) throw DataError("patch_count: overlap must be < 4096");
  if (length <= kPatchLength) return 1;
  const std::size_t step = kPatchLength - overlap;
  const std::size_t rest = length - kPatchLength;
  return (rest + step - 1) / step + 1;  // ceil(rest/step) + 1
}

std::vector<std::size_t> patch_starts(std::size_t length, std::size_t overlap) {
  const std::size_t count = patch_count(length, overlap);
  if (count == 1) return {0};
  const std::size_t step = kPatchLength - overlap;
  std::vector<std::size_t> starts(count);
  for (std::size_t i = 0; i < count; ++i)
    starts[i] = std::min(i * step, length - kPatchLength);
  return starts;
}

std::vector<Signal> segment_patches(const Signal& signal, std::size_t overlap) {
  const auto starts = patch_starts(signal.samples, overlap);
  std::vector<Signal> patches;
  patches.reserve(starts.size());
  const std::size_t copy_len = std::min(signal.samples, kPatchLength);
  for (std::size_t start : starts) {
    Signal p(signal.leads, kPatchLength);  // zero-filled; short signals stay padded
    for (std::size_t lead = 0; lead < signal.leads; ++lead)
      std::copy_n(signal.row(lead) + start, copy_len, p.row(lead));
    patches.push_back(std::move(p));
  }
  return patches;
}

ClassSet apply_thresholds(const std::array<double, kNumClasses>& probabilities,
                          const metrics::ThresholdVector& thresholds) {
  ClassSet out;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (probabilities[c] >= thresholds.values[c]) out.set(c);
  return out;
}

Prediction predict_record(const std::vector<const model::Checkpoint*>& models,
                          const EcgRecord& record,
                          const metrics::ThresholdVector& thresholds) {
  if (models.empty()) throw DataError("predict_record: no models given");
  for (std::size_t i = 1; i < models.size(); ++i)
    if (models[i]->class_names != models[0]->class_names ||
        models[i]->normal_index != models[0]->normal_index)
      throw ModelClassMapMismatch("predict_record: checkpoints disagree on class maps");

  const auto patches = segment_patches(record.signal);
  const std::size_t p = patches.size();

  // one (P,12,4096) batch per model; patches share the demographics row
  auto signal = ad::Tensor::create({p, kNumLeads, kPatchLength});
  for (std::size_t i = 0; i < p; ++i)
    std::copy(patches[i].data.begin(), patches[i].data.end(),
              signal->data.begin() + static_cast<std::ptrdiff_t>(i * kNumLeads * kPatchLength));

  const auto demo = preprocess::encode_demographics(record.meta.demographics());
  auto demo_t = ad::Tensor::create({p, preprocess::kDemographicDim});
  for (std::size_t i = 0; i < p; ++i)
    std::copy(demo.begin(), demo.end(),
              demo_t->data.begin() + static_cast<std::ptrdiff_t>(i * preprocess::kDemographicDim));

  Prediction pred;
  pred.per_patch.assign(p, {});
  for (const auto* ck : models) {
    const auto result =
        model::forward(nullptr, ck->params, signal, demo_t, ad::Mode::eval, nullptr);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t c = 0; c < kNumClasses; ++c)
        pred.per_patch[i][c] += result.probabilities->data[i * kNumClasses + c];
  }
  const double inv_models = 1.0 / static_cast<double>(models.size());
  for (auto& row : pred.per_patch)
    for (auto& v : row) v *= inv_models;

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p; ++i) sum += pred.per_patch[i][c];
    pred.probabilities[c] = sum / static_cast<double>(p);
  }
  pred.binary = apply_thresholds(pred.probabilities, thresholds);
  return pred;
}

}  // namespace senet::inference
