#include "senet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "senet/errors.hpp"

namespace senet::metrics {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
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

}  // namespace

WeightMatrix WeightMatrix::identity(std::vector<std::string> names) {
  WeightMatrix w;
  w.class_names = std::move(names);
  for (std::size_t i = 0; i < kNumClasses; ++i) w.values[i][i] = 1.0;
  w.validate();
  return w;
}

void WeightMatrix::validate() const {
  if (class_names.size() != kNumClasses)
    throw DataError("weight matrix needs " + std::to_string(kNumClasses) + " classes");
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (values[i][i] != 1.0)
      throw DataError("weight matrix diagonal must be 1 (class " + class_names[i] + ")");
    for (std::size_t j = 0; j < kNumClasses; ++j)
      if (!std::isfinite(values[i][j]))
        throw DataError("weight matrix entry not finite");
  }
}

WeightMatrix WeightMatrix::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open weight matrix: " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("weight matrix: empty file");
  WeightMatrix w;
  w.class_names = split_csv(line);
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (!std::getline(in, line))
      throw DataError("weight matrix: expected 24 rows after the header");
    const auto fields = split_csv(line);
    if (fields.size() != kNumClasses)
      throw DataError("weight matrix row " + std::to_string(i + 1) +
                      " needs 24 values");
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      try {
        w.values[i][j] = std::stod(fields[j]);
      } catch (const std::exception&) {
        throw DataError("weight matrix: bad value '" + fields[j] + "'");
      }
    }
  }
  w.validate();
  return w;
}

void WeightMatrix::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write weight matrix: " + file.string());
  for (std::size_t j = 0; j < class_names.size(); ++j)
    out << (j ? "," : "") << class_names[j];
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) out << (j ? "," : "") << values[i][j];
    out << '\n';
  }
}

ThresholdVector ThresholdVector::uniform(double t) {
  ThresholdVector v;
  v.values.fill(t);
  v.validate();
  return v;
}

void ThresholdVector::validate() const {
  for (double t : values)
    if (!(t >= 0.0 && t <= 1.0))
      throw DataError("threshold outside [0,1]: " + std::to_string(t));
}

ThresholdVector ThresholdVector::load(const std::filesystem::path& file,
                                      const ClassMap& map) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open thresholds: " + file.string());
  ThresholdVector v;
  std::array<bool, kNumClasses> seen{};
  std::string line;
  while (std::getline(in, line)) {
    const auto fields = split_csv(line);
    if (fields.empty() || fields[0].empty() || fields[0] == "class") continue;
    if (fields.size() != 2)
      throw DataError("threshold line needs 'class,threshold': '" + line + "'");
    const auto ci = map.class_of_abbreviation(fields[0]);
    if (!ci) throw DataError("threshold file: unknown class '" + fields[0] + "'");
    v.values[*ci] = std::stod(fields[1]);
    seen[*ci] = true;
  }
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (!seen[i])
      throw DataError("threshold file missing class " + map.scored_abbreviations()[i]);
  v.validate();
  return v;
}

void ThresholdVector::save(const std::filesystem::path& file, const ClassMap& map) const {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write thresholds: " + file.string());
  out << "class,threshold\n";
  out.precision(17);
  for (std::size_t i = 0; i < kNumClasses; ++i)
    out << map.scored_abbreviations()[i] << ',' << values[i] << '\n';
}

namespace {

// sum(W * A) for one prediction assignment
double observed_weight(const std::vector<ClassSet>& truth,
                       const std::vector<ClassSet>& pred, const WeightMatrix& w) {
  double total = 0.0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const auto u = truth[r].membership | pred[r].membership;
    const double n = std::max<std::size_t>(1, u.count());
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      if (!truth[r].test(i)) continue;
      for (std::size_t j = 0; j < kNumClasses; ++j)
        if (pred[r].test(j)) total += w.values[i][j] / n;
    }
  }
  return total;
}

}  // namespace

double challenge_score(const std::vector<ClassSet>& truth,
                       const std::vector<ClassSet>& pred, const WeightMatrix& weights,
                       std::size_t normal_index) {
  if (truth.empty() || truth.size() != pred.size())
    throw DataError("challenge_score: record lists must be non-empty and equal length");
  if (normal_index >= kNumClasses)
    throw DataError("challenge_score: normal class index out of range");

  const double s_obs = observed_weight(truth, pred, weights);
  const double s_correct = observed_weight(truth, truth, weights);
  ClassSet normal_only;
  normal_only.set(normal_index);
  const std::vector<ClassSet> all_normal(truth.size(), normal_only);
  const double s_inactive = observed_weight(truth, all_normal, weights);

  if (s_correct == s_inactive)
    throw DegenerateNormalization("challenge_score: correct and inactive references tie");
  return (s_obs - s_inactive) / (s_correct - s_inactive);
}

StatsReport class_stats(const std::vector<ClassSet>& truth,
                        const std::vector<ClassSet>& pred) {
  if (truth.size() != pred.size())
    throw LengthMismatch("class_stats: list lengths differ");
  StatsReport rep;
  for (std::size_t r = 0; r < truth.size(); ++r)
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const bool t = truth[r].test(c), p = pred[r].test(c);
      auto& s = rep.per_class[c];
      if (t && p)
        ++s.tp;
      else if (!t && p)
        ++s.fp;
      else if (t && !p)
        ++s.fn;
      else
        ++s.tn;
    }

  double sens_sum = 0, spec_sum = 0, f1_sum = 0;
  int sens_n = 0, spec_n = 0, f1_n = 0;
  for (auto& s : rep.per_class) {
    if (s.tp + s.fn > 0) {
      s.sensitivity = static_cast<double>(s.tp) / (s.tp + s.fn);
      sens_sum += *s.sensitivity;
      ++sens_n;
    }
    if (s.tn + s.fp > 0) {
      s.specificity = static_cast<double>(s.tn) / (s.tn + s.fp);
      spec_sum += *s.specificity;
      ++spec_n;
    }
    if (2 * s.tp + s.fp + s.fn > 0) {
      s.f1 = 2.0 * s.tp / (2.0 * s.tp + s.fp + s.fn);
      f1_sum += *s.f1;
      ++f1_n;
    }
  }
  if (sens_n) rep.macro_sensitivity = sens_sum / sens_n;
  if (spec_n) rep.macro_specificity = spec_sum / spec_n;
  if (f1_n) rep.macro_f1 = f1_sum / f1_n;
  return rep;
}

namespace {

std::vector<ClassSet> threshold_all(
    const std::vector<std::array<double, kNumClasses>>& probabilities,
    const std::array<double, kNumClasses>& thresholds) {
  std::vector<ClassSet> out(probabilities.size());
  for (std::size_t r = 0; r < probabilities.size(); ++r)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (probabilities[r][c] >= thresholds[c]) out[r].set(c);
  return out;
}

}  // namespace

ThresholdVector optimize_thresholds(
    const std::vector<std::array<double, kNumClasses>>& probabilities,
    const std::vector<ClassSet>& truth, const WeightMatrix& weights,
    std::size_t normal_index) {
  if (probabilities.empty() || probabilities.size() != truth.size())
    throw DataError("optimize_thresholds: need N >= 1 probability rows matching truth");

  const auto score_at = [&](const std::array<double, kNumClasses>& th) {
    return challenge_score(truth, threshold_all(probabilities, th), weights,
                           normal_index);
  };

  // phase 1: single global threshold over {0.0,...,1.0}
  double best_global = 0.0, best_global_score = -HUGE_VAL;
  for (int i = 0; i <= 10; ++i) {
    const double t = i / 10.0;
    std::array<double, kNumClasses> th;
    th.fill(t);
    const double s = score_at(th);
    if (s > best_global_score) {  // ties keep the lowest threshold
      best_global_score = s;
      best_global = t;
    }
  }

  // phase 2: per-class sweep in ascending index order, others fixed
  ThresholdVector result = ThresholdVector::uniform(best_global);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double best_t = result.values[c];
    double best_score = score_at(result.values);
    for (int i = 0; i <= 100; ++i) {
      const double t = i / 100.0;
      auto th = result.values;
      th[c] = t;
      const double s = score_at(th);
      const bool better = s > best_score;
      const bool tie_closer =
          s == best_score && std::abs(t - best_global) < std::abs(best_t - best_global);
      if (better || tie_closer) {  // remaining ties keep the lowest value
        best_score = s;
        best_t = t;
      }
    }
    result.values[c] = best_t;
  }
  return result;
}

KappaResult cohens_kappa(const std::vector<Rating>& r1, const std::vector<Rating>& r2,
                         bool exclude_unsure) {
  if (r1.empty() || r1.size() != r2.size())
    throw LengthMismatch("cohens_kappa: rater series must be non-empty and aligned");

  KappaResult res;
  for (std::size_t i = 0; i < r1.size(); ++i)
    ++res.table[static_cast<int>(r1[i])][static_cast<int>(r2[i])];

  // categories entering the agreement computation
  const int ncat = exclude_unsure ? 2 : 3;
  std::array<double, 3> m1{}, m2{};
  double n = 0, agree = 0;
  for (int a = 0; a < ncat; ++a)
    for (int b = 0; b < ncat; ++b) {
      const double cnt = static_cast<double>(res.table[a][b]);
      n += cnt;
      m1[a] += cnt;
      m2[b] += cnt;
      if (a == b) agree += cnt;
    }
  if (n < 1) throw NoDecisiveExamples("cohens_kappa: no decisive example pairs");
  res.n_used = static_cast<std::size_t>(n);

  const double p_o = agree / n;
  double p_e = 0;
  for (int a = 0; a < ncat; ++a) p_e += (m1[a] / n) * (m2[a] / n);
  if (p_e == 1.0)
    throw DegenerateMarginals("cohens_kappa: chance agreement is 1, kappa undefined");
  res.kappa = (p_o - p_e) / (1.0 - p_e);
  return res;
}

}  // namespace senet::metrics
