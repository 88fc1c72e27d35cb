#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "senet/errors.hpp"
#include "senet/synth.hpp"

using namespace senet;
using namespace senet::synth;

namespace {

const ClassMap& map() { return ClassMap::builtin(); }

std::size_t class_index(const char* abbrev) {
  return map().class_of_abbreviation(abbrev).value();
}

// rule-based axis estimator: R-peak times from the strongest limb lead,
// then the sign of the summed samples of leads I, II, III at those times
// (the textbook recognition rule)
struct AxisEstimate {
  double sum_i = 0, sum_ii = 0, sum_iii = 0;
  bool lad() const { return sum_i > 0 && sum_ii < 0 && sum_iii < 0; }
};

AxisEstimate estimate_axis(const EcgRecord& rec) {
  const auto& s = rec.signal;
  const auto fs = static_cast<std::size_t>(rec.meta.sampling_rate_hz);

  std::size_t ref = 0;
  double best = -1;
  for (std::size_t lead = 0; lead < 3; ++lead) {
    double peak = 0;
    for (std::size_t i = 0; i < s.samples; ++i) peak = std::max(peak, std::abs(s.at(lead, i)));
    if (peak > best) {
      best = peak;
      ref = lead;
    }
  }

  const std::size_t win = fs / 5;  // 0.2 s refractory window
  const double thr = 0.6 * best;
  std::vector<std::size_t> peaks;
  for (std::size_t i = win; i + win < s.samples; ++i) {
    const double a = std::abs(s.at(ref, i));
    if (a < thr) continue;
    bool is_max = true;
    for (std::size_t j = i - win; j <= i + win && is_max; ++j)
      if (std::abs(s.at(ref, j)) > a) is_max = false;
    if (is_max) {
      peaks.push_back(i);
      i += win;  // skip the refractory window
    }
  }

  AxisEstimate est;
  for (std::size_t p : peaks) {
    est.sum_i += s.at(0, p);
    est.sum_ii += s.at(1, p);
    est.sum_iii += s.at(2, p);
  }
  return est;
}

}  // namespace

TEST_CASE("label rule covers the fixed regions") {
  SynthSpec spec;
  spec.heart_rate_bpm = 75;
  spec.qrs_axis_degrees = -45;
  auto lad = label_rule(spec, map());
  CHECK(lad.test(class_index("LAD")));
  CHECK(lad.count() == 1);

  spec.qrs_axis_degrees = 0;
  spec.heart_rate_bpm = 50;
  auto sb = label_rule(spec, map());
  CHECK(sb.test(class_index("SB")));
  CHECK(sb.count() == 1);

  spec.heart_rate_bpm = 120;
  auto stach = label_rule(spec, map());
  CHECK(stach.test(class_index("STach")));
  CHECK(stach.count() == 1);

  spec.heart_rate_bpm = 80;
  auto snr = label_rule(spec, map());
  CHECK(snr.test(class_index("SNR")));
  CHECK(snr.count() == 1);

  spec.qrs_axis_degrees = 135;
  auto rad = label_rule(spec, map());
  CHECK(rad.test(class_index("RAD")));

  spec.rhythm = Rhythm::afib;
  spec.qrs_axis_degrees = -45;
  auto af = label_rule(spec, map());
  CHECK(af.test(class_index("AF")));
  CHECK(af.test(class_index("LAD")));  // combined labels
  CHECK(af.count() == 2);

  // SB+LAD combination
  SynthSpec combo;
  combo.heart_rate_bpm = 50;
  combo.qrs_axis_degrees = -45;
  auto sb_lad = label_rule(combo, map());
  CHECK(sb_lad.count() == 2);
}

TEST_CASE("LAD geometry: positive lead I, negative leads II and III") {
  SynthSpec spec;
  spec.qrs_axis_degrees = -45;
  spec.heart_rate_bpm = 75;
  spec.noise_std_mv = 0.0;
  spec.seed = 7;
  auto rec = generate_record(spec, map());
  CHECK(rec.labels.test(class_index("LAD")));

  auto est = estimate_axis(rec);
  CHECK(est.sum_i > 0);    // cos(-45) > 0
  CHECK(est.sum_ii < 0);   // cos(-105) < 0
  CHECK(est.sum_iii < 0);  // cos(-165) < 0
  CHECK(est.lad());
}

TEST_CASE("generated records are deterministic under the seed") {
  SynthSpec spec;
  spec.qrs_axis_degrees = 30;
  spec.heart_rate_bpm = 80;
  spec.noise_std_mv = 0.05;
  spec.seed = 99;
  auto a = generate_record(spec, map());
  auto b = generate_record(spec, map());
  CHECK(a.signal.data == b.signal.data);
  CHECK(a.meta.age_years == b.meta.age_years);
  CHECK(a.meta.sex == b.meta.sex);
  CHECK(a.labels == b.labels);

  spec.seed = 100;
  auto c = generate_record(spec, map());
  CHECK(c.signal.data != a.signal.data);
  CHECK(c.labels == a.labels);  // labels never depend on the draw
}

TEST_CASE("invalid specs are rejected") {
  SynthSpec spec;
  spec.heart_rate_bpm = 75;
  spec.qrs_axis_degrees = -95;  // no label region covers this sinus case
  CHECK_THROWS_AS((void)generate_record(spec, map()), InvalidSpec);

  SynthSpec bad_rate;
  bad_rate.heart_rate_bpm = 0;
  CHECK_THROWS_AS((void)generate_record(bad_rate, map()), InvalidSpec);

  SynthSpec bad_axis;
  bad_axis.qrs_axis_degrees = 200;
  CHECK_THROWS_AS((void)generate_record(bad_axis, map()), InvalidSpec);

  SynthSpec bad_len;
  bad_len.duration_s = 0.001;
  bad_len.sampling_rate_hz = 100;
  CHECK_THROWS_AS((void)generate_record(bad_len, map()), InvalidSpec);
}

TEST_CASE("signal values stay within the template-plus-noise bound") {
  SynthSpec spec;
  spec.qrs_axis_degrees = 20;
  spec.heart_rate_bpm = 80;
  spec.noise_std_mv = 0.1;
  spec.seed = 3;
  auto rec = generate_record(spec, map());
  const double bound = 1.4 + 6.0 * spec.noise_std_mv;
  for (double v : rec.signal.data) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("R-R statistics: regular sinus, jittered afib") {
  SynthSpec spec;
  spec.heart_rate_bpm = 80;
  spec.qrs_axis_degrees = 30;
  spec.duration_s = 60;
  spec.seed = 11;

  auto stats = [](const std::vector<double>& times) {
    std::vector<double> rr;
    for (std::size_t i = 1; i < times.size(); ++i) rr.push_back(times[i] - times[i - 1]);
    const double mean = std::accumulate(rr.begin(), rr.end(), 0.0) / rr.size();
    double var = 0;
    for (double v : rr) var += (v - mean) * (v - mean);
    var /= rr.size();
    return std::sqrt(var) / mean;  // coefficient of variation
  };

  const double cv_sinus = stats(beat_times(spec));
  CHECK(cv_sinus < 1e-12);

  spec.rhythm = Rhythm::afib;
  const double cv_afib = stats(beat_times(spec));
  CHECK(cv_afib > 0.05);
}

TEST_CASE("afib records carry no P waves") {
  // with zero noise, the quiet span before each R complex should be flat for
  // afib and show the P bump for sinus
  SynthSpec spec;
  spec.heart_rate_bpm = 70;
  spec.qrs_axis_degrees = 30;
  spec.duration_s = 8;
  spec.seed = 13;

  auto sinus = generate_record(spec, map());
  spec.rhythm = Rhythm::afib;
  spec.qrs_axis_degrees = 30;
  auto afib = generate_record(spec, map());

  // lead II energy in a window 0.33..0.23 s before the first sinus beat
  const auto beats = beat_times(spec);
  const int fs = spec.sampling_rate_hz;
  const double rr = 60.0 / spec.heart_rate_bpm;
  const auto p_center = static_cast<std::size_t>((beats[1] - 0.28 * rr) * fs);
  double sinus_peak = 0, afib_peak = 0;
  for (std::size_t i = p_center - 10; i <= p_center + 10; ++i) {
    sinus_peak = std::max(sinus_peak, std::abs(sinus.signal.at(1, i)));
    afib_peak = std::max(afib_peak, std::abs(afib.signal.at(1, i)));
  }
  CHECK(sinus_peak > 0.02);  // P wave present
  CHECK(afib_peak < 0.02);
}

TEST_CASE("generate_dataset produces exact per-class counts, shuffled and deterministic") {
  auto data = generate_dataset(10, 0.05, 42, map(), 8.0, 500);
  REQUIRE(data.size() == 60);

  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& rec : data) {
    CHECK(rec.labels.count() == 1);  // regions are single-label
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (rec.labels.test(c)) ++counts[c];
  }
  for (const char* abbrev : {"SNR", "LAD", "RAD", "SB", "STach", "AF"})
    CHECK(counts[class_index(abbrev)] == 10);

  // ids are zero-padded and already sorted in shuffled generation order
  CHECK(data[0].meta.record_id == "synth00000");
  bool interleaved = false;
  for (std::size_t i = 1; i < 10; ++i)
    if (data[i].labels != data[0].labels) interleaved = true;
  CHECK(interleaved);

  auto again = generate_dataset(10, 0.05, 42, map(), 8.0, 500);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(again[i].meta.record_id == data[i].meta.record_id);
    CHECK(again[i].signal.data == data[i].signal.data);
  }
}

TEST_CASE("rule-based detector recovers the LAD label on nearly every record") {
  auto data = generate_dataset(50, 0.05, 2024, map(), 8.0, 500);
  const auto lad = class_index("LAD");
  std::size_t correct = 0;
  for (const auto& rec : data) {
    const bool detected = estimate_axis(rec).lad();
    if (detected == rec.labels.test(lad)) ++correct;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  CHECK(accuracy >= 0.98);
}
