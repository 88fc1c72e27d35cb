// Command-line front end: synth | train | thresholds | predict | eval | kappa.
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "senet/errors.hpp"
#include "senet/inference.hpp"
#include "senet/metrics.hpp"
#include "senet/model.hpp"
#include "senet/preprocess.hpp"
#include "senet/record_io.hpp"
#include "senet/synth.hpp"
#include "senet/training.hpp"

namespace fs = std::filesystem;
using namespace senet;

namespace {

ClassMap resolve_class_map(const std::string& explicit_path, const fs::path& data_dir) {
  if (!explicit_path.empty()) return ClassMap::load(explicit_path);
  const auto local = data_dir / "class_map.csv";
  if (!data_dir.empty() && fs::exists(local)) return ClassMap::load(local);
  return ClassMap::builtin();
}

metrics::WeightMatrix resolve_weights(const std::string& explicit_path,
                                      const fs::path& data_dir, const ClassMap& map) {
  if (!explicit_path.empty()) return metrics::WeightMatrix::load(explicit_path);
  const auto local = data_dir / "weights.csv";
  if (!data_dir.empty() && fs::exists(local)) return metrics::WeightMatrix::load(local);
  return metrics::WeightMatrix::identity(map.scored_abbreviations());
}

// reward matrix written alongside synthetic datasets: identity plus partial
// credit between the sinus-rate classes
metrics::WeightMatrix synth_weights(const ClassMap& map) {
  auto w = metrics::WeightMatrix::identity(map.scored_abbreviations());
  const auto link = [&](const char* a, const char* b, double v) {
    const auto i = map.class_of_abbreviation(a), j = map.class_of_abbreviation(b);
    if (i && j) {
      w.values[*i][*j] = v;
      w.values[*j][*i] = v;
    }
  };
  link("SNR", "SB", 0.5);
  link("SNR", "STach", 0.5);
  link("SNR", "SA", 0.5);
  link("AF", "AFL", 0.3);
  return w;
}

void write_class_map(const ClassMap& map, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write class map: " + file.string());
  for (const auto& e : map.entries()) {
    out << e.abbreviation << ',';
    for (std::size_t i = 0; i < e.codes.size(); ++i) out << (i ? "|" : "") << e.codes[i];
    out << ',' << (e.scored ? 1 : 0) << '\n';
  }
}

std::vector<EcgRecord> load_records(const fs::path& dir, const ClassMap& map) {
  auto loaded = record_io::load_dataset(dir, map);
  for (const auto& f : loaded.failures)
    std::cerr << "warning: skipped " << f.file.string() << ": " << f.message << '\n';
  if (loaded.unknown_code_tally > 0)
    std::cerr << "note: ignored " << loaded.unknown_code_tally
              << " unknown diagnosis code(s)\n";
  return std::move(loaded.records);
}

void write_prediction_csv(const fs::path& file, const ClassMap& map,
                          const inference::Prediction& pred) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write prediction: " + file.string());
  const auto& names = map.scored_abbreviations();
  for (std::size_t c = 0; c < kNumClasses; ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (std::size_t c = 0; c < kNumClasses; ++c)
    out << (c ? "," : "") << (pred.binary.test(c) ? 1 : 0);
  out << '\n';
  out.precision(17);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    out << (c ? "," : "") << pred.probabilities[c];
  out << '\n';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t\r");
    const auto e = cur.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

ClassSet read_prediction_csv(const fs::path& file, const ClassMap& map) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open prediction: " + file.string());
  std::string header, binary;
  if (!std::getline(in, header) || !std::getline(in, binary))
    throw DataError("prediction file too short: " + file.string());
  const auto names = split_csv_line(header);
  const auto bits = split_csv_line(binary);
  if (names.size() != kNumClasses || bits.size() != kNumClasses)
    throw DataError("prediction file needs 24 columns: " + file.string());
  ClassSet set;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto ci = map.class_of_abbreviation(names[c]);
    if (!ci) throw DataError("prediction file has unknown class '" + names[c] + "'");
    if (bits[c] == "1")
      set.set(*ci);
    else if (bits[c] != "0")
      throw DataError("prediction binary row must be 0/1: " + file.string());
  }
  return set;
}

int run_synth(const std::string& out_dir, int n_per_class, double noise, double duration,
              int fs_hz, std::uint64_t seed) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto& map = ClassMap::builtin();
  auto records = synth::generate_dataset(n_per_class, noise, seed, map, duration, fs_hz);
  for (const auto& rec : records) record_io::write_record(rec, dir);
  write_class_map(map, dir / "class_map.csv");
  synth_weights(map).save(dir / "weights.csv");
  std::cout << "wrote " << records.size()
            << " records, class_map.csv and weights.csv to " << dir.string() << '\n';
  return 0;
}

int run_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& class_map_path, const std::string& weights_path,
              model::ModelConfig mcfg, training::TrainConfig tcfg,
              bool pooled_thresholds, int jobs) {
  ad::set_parallel_jobs(jobs);
  // a shorter block stack keeps the doubling plan prefix and in-range strides
  mcfg.channel_plan.clear();
  for (int i = 0; i < mcfg.num_blocks; ++i)
    mcfg.channel_plan.push_back(64 * (1 << (i / 2)));
  std::erase_if(mcfg.downsample_blocks, [&](int b) { return b > mcfg.num_blocks; });
  // rate drops beyond the final epoch can never fire
  std::erase_if(tcfg.lr_drop_epochs, [&](int e) { return e > tcfg.epochs; });

  const auto map = resolve_class_map(class_map_path, data_dir);
  const auto weights = resolve_weights(weights_path, data_dir, map);
  auto records = load_records(data_dir, map);

  training::TrainOptions opts;
  opts.pooled_thresholds = pooled_thresholds;
  auto summary = training::train_model(records, mcfg, tcfg, map, weights, out_dir, opts);

  std::cout << "folds: " << tcfg.folds << "  records: " << records.size() << '\n';
  for (const auto& row : summary.history)
    if (row.val_score)
      std::cout << "fold " << row.fold << " val s_normalized = " << *row.val_score
                << '\n';
  std::cout << "pooled out-of-fold s_normalized (tuned thresholds) = "
            << summary.tuned_oof_score << '\n';
  std::cout << "pooled out-of-fold s_normalized (uniform 0.5)      = "
            << summary.default_oof_score << '\n';
  return 0;
}

int run_thresholds(const std::string& probabilities_path, const std::string& data_dir,
                   const std::string& out_path, const std::string& class_map_path,
                   const std::string& weights_path) {
  const auto map = resolve_class_map(class_map_path, data_dir);
  const auto weights = resolve_weights(weights_path, data_dir, map);
  auto records = load_records(data_dir, map);

  std::ifstream in(probabilities_path);
  if (!in) throw DataError("cannot open probabilities: " + probabilities_path);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("probabilities file is empty: " + probabilities_path);
  const auto header = split_csv_line(line);
  if (header.size() != kNumClasses + 1 || header[0] != "record_id")
    throw DataError("probabilities header must be record_id plus 24 classes");
  std::array<std::size_t, kNumClasses> order{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto ci = map.class_of_abbreviation(header[c + 1]);
    if (!ci) throw DataError("unknown class in probabilities: '" + header[c + 1] + "'");
    order[c] = *ci;
  }

  std::vector<std::array<double, kNumClasses>> probs;
  std::vector<ClassSet> truth;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != kNumClasses + 1)
      throw DataError("probabilities row needs 25 fields: '" + line + "'");
    const auto rec = std::find_if(records.begin(), records.end(), [&](const EcgRecord& r) {
      return r.meta.record_id == fields[0];
    });
    if (rec == records.end())
      throw DataError("probabilities reference unknown record '" + fields[0] + "'");
    std::array<double, kNumClasses> row{};
    for (std::size_t c = 0; c < kNumClasses; ++c)
      row[order[c]] = std::stod(fields[c + 1]);
    probs.push_back(row);
    truth.push_back(rec->labels);
  }
  if (probs.empty()) throw DataError("probabilities file has no rows");

  const auto th =
      metrics::optimize_thresholds(probs, truth, weights, map.normal_class_index());
  th.save(out_path, map);
  std::cout << "tuned thresholds from " << probs.size() << " rows -> " << out_path
            << '\n';
  return 0;
}

int run_predict(const std::vector<std::string>& model_paths, const std::string& run_dir,
                bool ensemble, const std::string& data_dir, const std::string& out_dir,
                const std::string& thresholds_path, const std::string& class_map_path,
                int jobs) {
  ad::set_parallel_jobs(jobs);
  std::vector<std::string> paths = model_paths;
  if (!run_dir.empty()) {
    if (ensemble) {
      for (const auto& entry : fs::directory_iterator(run_dir))
        if (entry.is_directory() &&
            entry.path().filename().string().rfind("fold", 0) == 0) {
          const auto m = entry.path() / "model.senet";
          if (fs::exists(m)) paths.push_back(m.string());
        }
      std::sort(paths.begin(), paths.end());
    } else {
      paths.push_back((fs::path(run_dir) / "fold0" / "model.senet").string());
    }
  }
  if (paths.empty()) throw DataError("predict: no model checkpoints given");

  std::vector<model::Checkpoint> checkpoints;
  for (const auto& p : paths) checkpoints.push_back(model::load_checkpoint(p));
  std::vector<const model::Checkpoint*> model_ptrs;
  for (const auto& ck : checkpoints) model_ptrs.push_back(&ck);

  const auto map = resolve_class_map(class_map_path, data_dir);
  if (checkpoints[0].class_names != map.scored_abbreviations())
    throw ModelClassMapMismatch("checkpoint class map differs from the requested one");

  const auto thresholds = thresholds_path.empty()
                              ? metrics::ThresholdVector::uniform(0.5)
                              : metrics::ThresholdVector::load(thresholds_path, map);

  auto records = load_records(data_dir, map);
  fs::create_directories(out_dir);
  for (const auto& rec : records) {
    const auto resampled = preprocess::resample_record(rec);
    const auto pred = inference::predict_record(model_ptrs, resampled, thresholds);
    write_prediction_csv(fs::path(out_dir) / (rec.meta.record_id + ".csv"), map, pred);
  }
  std::cout << "wrote " << records.size() << " prediction files ("
            << checkpoints.size() << " model" << (checkpoints.size() > 1 ? "s" : "")
            << ") to " << out_dir << '\n';
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& data_dir,
             const std::string& class_map_path, const std::string& weights_path,
             const std::string& out_path) {
  const auto map = resolve_class_map(class_map_path, data_dir);
  const auto weights = resolve_weights(weights_path, data_dir, map);
  auto records = load_records(data_dir, map);

  std::vector<ClassSet> truth, pred;
  for (const auto& rec : records) {
    const auto file = fs::path(pred_dir) / (rec.meta.record_id + ".csv");
    if (!fs::exists(file))
      throw DataError("missing prediction for record '" + rec.meta.record_id + "'");
    truth.push_back(rec.labels);
    pred.push_back(read_prediction_csv(file, map));
  }

  const auto rep = metrics::class_stats(truth, pred);
  const double score =
      metrics::challenge_score(truth, pred, weights, map.normal_class_index());

  const auto& names = map.scored_abbreviations();
  std::ostringstream csv;
  csv << "class,tp,fp,fn,tn,sensitivity,specificity,f1\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& s = rep.per_class[c];
    csv << names[c] << ',' << s.tp << ',' << s.fp << ',' << s.fn << ',' << s.tn << ',';
    if (s.sensitivity) csv << *s.sensitivity;
    csv << ',';
    if (s.specificity) csv << *s.specificity;
    csv << ',';
    if (s.f1) csv << *s.f1;
    csv << '\n';
  }
  std::cout << csv.str();
  std::cout << "{\n";
  std::cout << "  \"records\": " << records.size() << ",\n";
  if (rep.macro_sensitivity)
    std::cout << "  \"macro_sensitivity\": " << *rep.macro_sensitivity << ",\n";
  if (rep.macro_specificity)
    std::cout << "  \"macro_specificity\": " << *rep.macro_specificity << ",\n";
  if (rep.macro_f1) std::cout << "  \"macro_f1\": " << *rep.macro_f1 << ",\n";
  std::cout << "  \"s_normalized\": " << score << "\n}\n";

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write metrics: " + out_path);
    out << csv.str();
  }
  return 0;
}

int run_kappa(const std::string& input_path, bool include_unsure) {
  std::ifstream in(input_path);
  if (!in) throw DataError("cannot open rater file: " + input_path);

  const auto parse_rating = [](const std::string& s) {
    if (s == "pos" || s == "positive") return metrics::Rating::positive;
    if (s == "neg" || s == "negative") return metrics::Rating::negative;
    if (s == "unsure") return metrics::Rating::unsure;
    throw DataError("rating must be pos/neg/unsure, got '" + s + "'");
  };

  std::vector<metrics::Rating> r1, r2;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (first && !fields.empty() && fields[0] == "example_id") {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() != 3)
      throw DataError("rater row needs 'example_id,rater1,rater2': '" + line + "'");
    r1.push_back(parse_rating(fields[1]));
    r2.push_back(parse_rating(fields[2]));
  }

  const auto res = metrics::cohens_kappa(r1, r2, !include_unsure);
  std::cout << "n_used = " << res.n_used << '\n';
  const char* labels[3] = {"pos", "neg", "unsure"};
  std::cout << "agreement table (rows rater1, cols rater2):\n";
  std::printf("%8s%7s%7s%7s\n", "", "pos", "neg", "unsure");
  for (std::size_t a = 0; a < 3; ++a)
    std::printf("%8s%7zu%7zu%7zu\n", labels[a], res.table[a][0], res.table[a][1],
                res.table[a][2]);
  std::printf("kappa = %.3f\n", res.kappa);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "SE-ResNet 12-lead ECG classifier: synthesis, training, inference and evaluation"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  std::string synth_out;
  int n_per_class = 100, synth_fs = 500;
  double noise = 0.05, duration = 16.0;
  std::uint64_t synth_seed = 2020;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-per-class", n_per_class, "records per label class");
  synth_cmd->add_option("--noise", noise, "additive noise std in mV");
  synth_cmd->add_option("--duration", duration, "record duration in seconds");
  synth_cmd->add_option("--fs", synth_fs, "sampling rate in Hz");
  synth_cmd->add_option("--seed", synth_seed, "rng seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "cross-validated training run");
  std::string train_data, train_out, train_map, train_weights;
  model::ModelConfig mcfg;
  training::TrainConfig tcfg;
  bool pooled = false;
  int train_jobs = 1;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "run output directory")->required();
  train_cmd->add_option("--class-map", train_map, "class map file");
  train_cmd->add_option("--weights", train_weights, "weight matrix file");
  train_cmd->add_option("--folds", tcfg.folds, "cross-validation folds");
  train_cmd->add_option("--epochs", tcfg.epochs, "training epochs per fold");
  train_cmd->add_option("--batch-size", tcfg.batch_size, "batch size");
  train_cmd->add_option("--lr", tcfg.lr_initial, "initial learning rate");
  train_cmd->add_option("--width-scale", mcfg.width_scale, "channel width multiplier");
  train_cmd->add_option("--se-reduction", mcfg.se_reduction, "SE reduction factor");
  train_cmd->add_option("--blocks", mcfg.num_blocks, "number of residual blocks")
      ->check(CLI::Range(1, 8));
  train_cmd->add_option("--seed", tcfg.seed, "rng seed");
  train_cmd->add_option("--jobs", train_jobs, "worker threads (1 = bit-reproducible)");
  train_cmd->add_flag("--pooled-thresholds", pooled,
                      "also tune thresholds on pooled out-of-fold predictions");

  // thresholds
  auto* th_cmd =
      app.add_subcommand("thresholds", "re-tune thresholds from saved probabilities");
  std::string th_probs, th_data, th_out, th_map, th_weights;
  th_cmd->add_option("--probabilities", th_probs, "probabilities csv")->required();
  th_cmd->add_option("--data", th_data, "dataset directory with truth labels")
      ->required();
  th_cmd->add_option("--out", th_out, "output thresholds csv")->required();
  th_cmd->add_option("--class-map", th_map, "class map file");
  th_cmd->add_option("--weights", th_weights, "weight matrix file");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "classify records with checkpoints");
  std::vector<std::string> pred_models;
  std::string pred_run, pred_data, pred_out, pred_th, pred_map;
  bool ensemble = false;
  int pred_jobs = 1;
  pred_cmd->add_option("--model", pred_models, "checkpoint file (repeatable)");
  pred_cmd->add_option("--run", pred_run, "training run directory");
  pred_cmd->add_flag("--ensemble", ensemble, "average all fold models of --run");
  pred_cmd->add_option("--data", pred_data, "dataset directory")->required();
  pred_cmd->add_option("--out", pred_out, "prediction output directory")->required();
  pred_cmd->add_option("--thresholds", pred_th, "thresholds csv (default uniform 0.5)");
  pred_cmd->add_option("--class-map", pred_map, "class map file");
  pred_cmd->add_option("--jobs", pred_jobs, "worker threads");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against labels");
  std::string eval_pred, eval_data, eval_map, eval_weights, eval_out;
  eval_cmd->add_option("--pred", eval_pred, "prediction directory")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--class-map", eval_map, "class map file");
  eval_cmd->add_option("--weights", eval_weights, "weight matrix file");
  eval_cmd->add_option("--out", eval_out, "write per-class metrics csv");

  // kappa
  auto* kappa_cmd =
      app.add_subcommand("kappa", "inter-rater agreement from a rater csv");
  std::string kappa_input;
  bool include_unsure = false;
  kappa_cmd->add_option("--input", kappa_input, "csv of example_id,rater1,rater2")
      ->required();
  kappa_cmd->add_flag("--include-unsure", include_unsure,
                      "treat unsure as a third category instead of excluding");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed())
      return run_synth(synth_out, n_per_class, noise, duration, synth_fs, synth_seed);
    if (train_cmd->parsed())
      return run_train(train_data, train_out, train_map, train_weights, mcfg, tcfg,
                       pooled, train_jobs);
    if (th_cmd->parsed())
      return run_thresholds(th_probs, th_data, th_out, th_map, th_weights);
    if (pred_cmd->parsed())
      return run_predict(pred_models, pred_run, ensemble, pred_data, pred_out, pred_th,
                         pred_map, pred_jobs);
    if (eval_cmd->parsed())
      return run_eval(eval_pred, eval_data, eval_map, eval_weights, eval_out);
    if (kappa_cmd->parsed()) return run_kappa(kappa_input, include_unsure);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
