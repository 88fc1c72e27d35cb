#include "senet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "senet/errors.hpp"
#include "senet/inference.hpp"
#include "senet/rng.hpp"

namespace senet::training {

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || folds < 2)
    throw InvalidConfig("train config: epochs/batch_size/folds out of range");
  if (!(lr_initial > 0.0) || !(lr_drop_factor > 0.0))
    throw InvalidConfig("train config: learning rate values must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0))
    throw InvalidConfig("train config: Adam constants out of range");
  for (int e : lr_drop_epochs)
    if (e < 1 || e > epochs)
      throw InvalidConfig("train config: lr drop epoch outside [1,epochs]");
}

double lr_schedule(int epoch_1based, const TrainConfig& cfg) {
  double lr = cfg.lr_initial;
  for (int drop : cfg.lr_drop_epochs)
    if (epoch_1based >= drop) lr /= cfg.lr_drop_factor;
  return lr;
}

AdamState AdamState::init(const std::vector<ad::TensorPtr>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.emplace_back(p->size(), 0.0);
    st.v.emplace_back(p->size(), 0.0);
  }
  return st;
}

void adam_step(const std::vector<ad::TensorPtr>& params, AdamState& state, double lr,
               const TrainConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeMismatch("adam_step: state slot count does not match params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size() || v.size() != p.size())
      throw ShapeMismatch("adam_step: state shape does not match parameter");
    const bool has_grad = p.has_grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = has_grad ? p.grad[j] : 0.0;
      m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g;
      v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

std::vector<int> stratified_kfold(const std::vector<ClassSet>& label_sets, int k,
                                  std::uint64_t seed) {
  if (label_sets.empty()) throw EmptyDataset("stratified_kfold: no records");
  if (k < 2) throw InvalidConfig("stratified_kfold: k must be >= 2");
  const std::size_t n = label_sets.size();
  const auto kk = static_cast<std::size_t>(k);

  // remaining per-fold demand, per class and in total
  std::vector<std::array<double, kNumClasses>> demand(kk);
  std::array<std::size_t, kNumClasses> class_total{};
  for (const auto& ls : label_sets)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (ls.test(c)) ++class_total[c];
  for (std::size_t f = 0; f < kk; ++f)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      demand[f][c] = static_cast<double>(class_total[c]) / k;

  std::vector<int> fold(n, -1);
  std::array<std::size_t, kNumClasses> remaining = class_total;
  auto rng = make_rng(derive_seed(seed, 0x5f01d));

  const auto pick_fold = [&](std::size_t cls) {
    double best_demand = -HUGE_VAL;
    std::vector<std::size_t> tied;
    for (std::size_t f = 0; f < kk; ++f) {
      if (demand[f][cls] > best_demand) {
        best_demand = demand[f][cls];
        tied.assign(1, f);
      } else if (demand[f][cls] == best_demand) {
        tied.push_back(f);
      }
    }
    if (tied.size() > 1) {
      // fewest total remaining demand
      double best_total = HUGE_VAL;
      std::vector<std::size_t> tied2;
      for (std::size_t f : tied) {
        const double total = std::accumulate(demand[f].begin(), demand[f].end(), 0.0);
        if (total < best_total) {
          best_total = total;
          tied2.assign(1, f);
        } else if (total == best_total) {
          tied2.push_back(f);
        }
      }
      tied.swap(tied2);
    }
    if (tied.size() == 1) return tied[0];
    std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
    return tied[pick(rng)];
  };

  const auto assign = [&](std::size_t r, std::size_t f) {
    fold[r] = static_cast<int>(f);
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (label_sets[r].test(c)) {
        demand[f][c] -= 1.0;
        --remaining[c];
      }
  };

  for (;;) {
    // label with the fewest remaining unassigned examples
    std::size_t cls = kNumClasses;
    std::size_t best = SIZE_MAX;
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (remaining[c] > 0 && remaining[c] < best) {
        best = remaining[c];
        cls = c;
      }
    if (cls == kNumClasses) break;
    for (std::size_t r = 0; r < n; ++r)
      if (fold[r] < 0 && label_sets[r].test(cls)) assign(r, pick_fold(cls));
  }

  // label-free records: keep fold sizes level
  std::vector<std::size_t> fold_sizes(kk, 0);
  for (int f : fold)
    if (f >= 0) ++fold_sizes[static_cast<std::size_t>(f)];
  for (std::size_t r = 0; r < n; ++r) {
    if (fold[r] >= 0) continue;
    std::size_t target = 0;
    for (std::size_t f = 1; f < kk; ++f)
      if (fold_sizes[f] < fold_sizes[target]) target = f;
    fold[r] = static_cast<int>(target);
    ++fold_sizes[target];
  }
  return fold;
}

PreparedRecord prepare_record(const EcgRecord& record) {
  PreparedRecord out;
  out.id = record.meta.record_id;
  out.signal = record.meta.sampling_rate_hz == preprocess::kModelRateHz
                   ? record.signal
                   : preprocess::resample_linear(record.signal,
                                                 record.meta.sampling_rate_hz);
  out.demographics = preprocess::encode_demographics(record.meta.demographics());
  out.labels = record.labels;
  return out;
}

double train_epoch(model::ModelParams& params, AdamState& adam,
                   const std::vector<const PreparedRecord*>& records,
                   const TrainConfig& cfg, int epoch_1based) {
  if (records.empty()) throw EmptyDataset("train_epoch: no records");
  const double lr = lr_schedule(epoch_1based, cfg);
  auto rng = make_rng(derive_seed(cfg.seed, 0xe90c, static_cast<std::uint64_t>(epoch_1based)));

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const auto learnable = params.learnable();
  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n = records.size();
  double loss_sum = 0.0;

  for (std::size_t start = 0; start < n; start += bsz) {
    const std::size_t b = std::min(bsz, n - start);
    auto signal = ad::Tensor::create({b, kNumLeads, preprocess::kModelLength});
    auto demo = ad::Tensor::create({b, preprocess::kDemographicDim});
    auto targets = ad::Tensor::create({b, kNumClasses});

    for (std::size_t i = 0; i < b; ++i) {
      const auto& rec = *records[order[start + i]];
      auto fitted = preprocess::fit_length(rec.signal, ad::Mode::train, rng);
      std::copy(fitted[0].data.begin(), fitted[0].data.end(),
                signal->data.begin() +
                    static_cast<std::ptrdiff_t>(i * kNumLeads * preprocess::kModelLength));
      std::copy(rec.demographics.begin(), rec.demographics.end(),
                demo->data.begin() +
                    static_cast<std::ptrdiff_t>(i * preprocess::kDemographicDim));
      for (std::size_t c = 0; c < kNumClasses; ++c)
        targets->data[i * kNumClasses + c] = rec.labels.test(c) ? 1.0 : 0.0;
    }

    ad::Tape tape;
    const auto out = model::forward(&tape, params, signal, demo, ad::Mode::train, &rng);
    const auto loss = ad::bce_mean(&tape, out.logits, targets);
    if (!std::isfinite(loss->data[0]))
      throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch_1based));
    params.zero_grad();
    tape.backward(loss);
    adam_step(learnable, adam, lr, cfg);
    loss_sum += loss->data[0] * static_cast<double>(b);
  }
  return loss_sum / static_cast<double>(n);
}

namespace {

std::array<double, kNumClasses> predict_prepared(const model::ModelParams& params,
                                                 const PreparedRecord& rec) {
  auto rng = make_rng(0);  // eval mode draws nothing
  auto patches = preprocess::fit_length(rec.signal, ad::Mode::eval, rng);
  const std::size_t p = patches.size();

  auto signal = ad::Tensor::create({p, kNumLeads, preprocess::kModelLength});
  auto demo = ad::Tensor::create({p, preprocess::kDemographicDim});
  for (std::size_t i = 0; i < p; ++i) {
    std::copy(patches[i].data.begin(), patches[i].data.end(),
              signal->data.begin() +
                  static_cast<std::ptrdiff_t>(i * kNumLeads * preprocess::kModelLength));
    std::copy(rec.demographics.begin(), rec.demographics.end(),
              demo->data.begin() +
                  static_cast<std::ptrdiff_t>(i * preprocess::kDemographicDim));
  }
  const auto out = model::forward(nullptr, params, signal, demo, ad::Mode::eval, nullptr);
  std::array<double, kNumClasses> mean{};
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      mean[c] += out.probabilities->data[i * kNumClasses + c];
  for (auto& v : mean) v /= static_cast<double>(p);
  return mean;
}

void write_history(const std::filesystem::path& file, const std::vector<EpochRow>& rows) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write history: " + file.string());
  out << "fold,epoch,lr,loss,val_score\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.fold << ',' << r.epoch << ',' << r.lr << ',' << r.loss << ',';
    if (r.val_score) out << *r.val_score;
    out << '\n';
  }
}

void write_probabilities(const std::filesystem::path& file, const ClassMap& map,
                         const std::vector<std::string>& ids,
                         const std::vector<std::array<double, kNumClasses>>& rows) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write probabilities: " + file.string());
  out << "record_id";
  for (const auto& a : map.scored_abbreviations()) out << ',' << a;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << ids[i];
    for (double v : rows[i]) out << ',' << v;
    out << '\n';
  }
}

}  // namespace

TrainSummary train_model(const std::vector<EcgRecord>& dataset,
                         const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                         const ClassMap& map, const metrics::WeightMatrix& weights,
                         const std::filesystem::path& run_dir,
                         const TrainOptions& options) {
  if (dataset.empty()) throw EmptyDataset("train_model: empty dataset");
  mcfg.validate();
  tcfg.validate();
  std::filesystem::create_directories(run_dir);

  std::vector<PreparedRecord> prepared;
  prepared.reserve(dataset.size());
  for (const auto& rec : dataset) prepared.push_back(prepare_record(rec));

  std::vector<ClassSet> labels(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) labels[i] = dataset[i].labels;
  const auto fold_of = stratified_kfold(labels, tcfg.folds, tcfg.seed);

  TrainSummary summary;
  std::vector<std::array<double, kNumClasses>> oof_probs(dataset.size());
  std::vector<ClassSet> oof_binary_tuned(dataset.size());

  for (int f = 0; f < tcfg.folds; ++f) {
    std::vector<const PreparedRecord*> train_set;
    std::vector<std::size_t> heldout;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      if (fold_of[i] == f)
        heldout.push_back(i);
      else
        train_set.push_back(&prepared[i]);
    }
    if (train_set.empty() || heldout.empty())
      throw EmptyDataset("train_model: fold " + std::to_string(f) +
                         " has an empty split");

    auto params = model::init_params(mcfg, derive_seed(tcfg.seed, 0xf01d,
                                                       static_cast<std::uint64_t>(f)));
    params.set_requires_grad(true);
    auto adam = AdamState::init(params.learnable());

    TrainConfig fold_cfg = tcfg;
    fold_cfg.seed = derive_seed(tcfg.seed, 0xcafe, static_cast<std::uint64_t>(f));
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
      const double loss = train_epoch(params, adam, train_set, fold_cfg, epoch);
      summary.history.push_back(
          {f, epoch, lr_schedule(epoch, fold_cfg), loss, std::nullopt});
    }

    // held-out predictions, threshold tuning, checkpoint
    std::vector<std::array<double, kNumClasses>> fold_probs;
    std::vector<ClassSet> fold_truth;
    std::vector<std::string> fold_ids;
    for (std::size_t i : heldout) {
      auto probs = predict_prepared(params, prepared[i]);
      oof_probs[i] = probs;
      fold_probs.push_back(probs);
      fold_truth.push_back(prepared[i].labels);
      fold_ids.push_back(prepared[i].id);
    }
    const auto thresholds = metrics::optimize_thresholds(fold_probs, fold_truth, weights,
                                                         map.normal_class_index());
    std::vector<ClassSet> fold_binary;
    for (std::size_t j = 0; j < heldout.size(); ++j) {
      ClassSet set;
      for (std::size_t c = 0; c < kNumClasses; ++c)
        if (fold_probs[j][c] >= thresholds.values[c]) set.set(c);
      oof_binary_tuned[heldout[j]] = set;
      fold_binary.push_back(set);
    }
    const double val_score =
        metrics::challenge_score(fold_truth, fold_binary, weights, map.normal_class_index());
    summary.history.back().val_score = val_score;
    summary.fold_thresholds.push_back(thresholds);

    const auto fold_dir = run_dir / ("fold" + std::to_string(f));
    std::filesystem::create_directories(fold_dir);
    model::save_checkpoint(params, map.scored_abbreviations(), map.normal_class_index(),
                           fold_dir / "model.senet");
    thresholds.save(fold_dir / "thresholds.csv", map);
    if (options.write_oof_probabilities)
      write_probabilities(fold_dir / "oof_probabilities.csv", map, fold_ids, fold_probs);
  }

  // pooled out-of-fold scores: tuned per-fold thresholds vs uniform 0.5
  std::vector<ClassSet> default_binary(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (oof_probs[i][c] >= 0.5) default_binary[i].set(c);
  summary.tuned_oof_score =
      metrics::challenge_score(labels, oof_binary_tuned, weights, map.normal_class_index());
  summary.default_oof_score =
      metrics::challenge_score(labels, default_binary, weights, map.normal_class_index());

  if (options.pooled_thresholds) {
    const auto pooled = metrics::optimize_thresholds(oof_probs, labels, weights,
                                                     map.normal_class_index());
    pooled.save(run_dir / "thresholds_pooled.csv", map);
  }
  write_history(run_dir / "history.csv", summary.history);
  return summary;
}

}  // namespace senet::training
