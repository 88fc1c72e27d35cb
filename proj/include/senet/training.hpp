#ifndef SENET_TRAINING_HPP
#define SENET_TRAINING_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "senet/metrics.hpp"
#include "senet/model.hpp"
#include "senet/preprocess.hpp"
#include "senet/record.hpp"

namespace senet::training {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double lr_initial = 0.003;
  std::vector<int> lr_drop_epochs{20, 40};  // rate drops at the start of these
  double lr_drop_factor = 10.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 2020;
  int folds = 5;

  void validate() const;
};

// 0.003 for epochs 1-19, 0.0003 for 20-39, 0.00003 from epoch 40 on
// (with the default config). Non-increasing in the epoch.
double lr_schedule(int epoch_1based, const TrainConfig& cfg);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;

  static AdamState init(const std::vector<ad::TensorPtr>& params);
};

// Standard Adam with bias correction; a missing gradient buffer counts as
// all-zero. Increments the step counter once per call.
void adam_step(const std::vector<ad::TensorPtr>& params, AdamState& state, double lr,
               const TrainConfig& cfg);

// Iterative stratification: repeatedly take the label with the fewest
// remaining examples and deal its records to the fold with the greatest
// remaining demand for that label (ties: fewest total remaining demand,
// then seeded random). Returns a per-record fold index in [0,k).
std::vector<int> stratified_kfold(const std::vector<ClassSet>& label_sets, int k,
                                  std::uint64_t seed);

// Record after the static preprocessing stages: resampled to 257 Hz with
// demographics encoded. Length fitting happens per epoch.
struct PreparedRecord {
  std::string id;
  Signal signal;  // full length at 257 Hz
  std::array<double, preprocess::kDemographicDim> demographics{};
  ClassSet labels;
};

PreparedRecord prepare_record(const EcgRecord& record);

// One pass over the records: seeded shuffle, fresh random clipping, batches
// of cfg.batch_size (final partial batch trained), fused BCE, Adam update.
// Returns the record-weighted mean loss; throws TrainingDiverged on a
// non-finite loss.
double train_epoch(model::ModelParams& params, AdamState& adam,
                   const std::vector<const PreparedRecord*>& records,
                   const TrainConfig& cfg, int epoch_1based);

struct EpochRow {
  int fold = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> val_score;
};

struct TrainOptions {
  bool pooled_thresholds = false;  // additionally tune on pooled out-of-fold rows
  bool write_oof_probabilities = true;
};

struct TrainSummary {
  std::vector<EpochRow> history;
  std::vector<metrics::ThresholdVector> fold_thresholds;
  double tuned_oof_score = 0.0;    // pooled out-of-fold score, tuned thresholds
  double default_oof_score = 0.0;  // same rows with uniform 0.5 thresholds
};

// Full cross-validation run. Writes fold<i>/model.senet and
// fold<i>/thresholds.csv plus history.csv under run_dir.
TrainSummary train_model(const std::vector<EcgRecord>& dataset,
                         const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                         const ClassMap& map, const metrics::WeightMatrix& weights,
                         const std::filesystem::path& run_dir,
                         const TrainOptions& options = {});

}  // namespace senet::training

#endif  // SENET_TRAINING_HPP
