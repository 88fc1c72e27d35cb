#include "senet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "senet/errors.hpp"
#include "senet/rng.hpp"

namespace senet::synth {

namespace {

constexpr double kPi = std::numbers::pi;

// frontal-plane viewing angles of the limb leads, degrees
constexpr double kLimbAngles[6] = {0.0, 60.0, 120.0, -150.0, -30.0, 90.0};
// fixed precordial R amplitudes (mV), V1..V6
constexpr double kPrecordialR[6] = {0.3, 0.5, 0.9, 1.3, 1.2, 1.0};

constexpr double kRAmplitude = 1.2;   // mV before axis scaling
constexpr double kPAmplitude = 0.12;  // mV
constexpr double kTAmplitude = 0.30;  // mV

void validate_spec(const SynthSpec& spec) {
  if (!(spec.heart_rate_bpm > 0.0)) throw InvalidSpec("heart rate must be positive");
  if (!(spec.qrs_axis_degrees > -180.0) || spec.qrs_axis_degrees > 180.0)
    throw InvalidSpec("QRS axis must lie in (-180, 180]");
  if (spec.noise_std_mv < 0.0) throw InvalidSpec("noise std must be non-negative");
  if (!(spec.duration_s > 0.0)) throw InvalidSpec("duration must be positive");
  if (spec.sampling_rate_hz < 1) throw InvalidSpec("sampling rate must be >= 1");
  if (spec.duration_s * spec.sampling_rate_hz < 2.0)
    throw InvalidSpec("duration x sampling rate must be >= 2 samples");
}

// adds a Gaussian bump, evaluated within +-4 sigma
void add_wave(double* row, std::size_t n, int fs, double center_s, double sigma_s,
              double amplitude) {
  if (amplitude == 0.0) return;
  const double lo = center_s - 4.0 * sigma_s, hi = center_s + 4.0 * sigma_s;
  const long i0 = std::max(0L, static_cast<long>(std::floor(lo * fs)));
  const long i1 = std::min(static_cast<long>(n) - 1, static_cast<long>(std::ceil(hi * fs)));
  const double inv2s2 = 1.0 / (2.0 * sigma_s * sigma_s);
  for (long i = i0; i <= i1; ++i) {
    const double dt = static_cast<double>(i) / fs - center_s;
    row[i] += amplitude * std::exp(-dt * dt * inv2s2);
  }
}

}  // namespace

ClassSet label_rule(const SynthSpec& spec, const ClassMap& map) {
  const double axis = spec.qrs_axis_degrees;
  const double rate = spec.heart_rate_bpm;
  const bool sinus = spec.rhythm == Rhythm::sinus;

  ClassSet set;
  const auto mark = [&](const char* abbrev) {
    const auto ci = map.class_of_abbreviation(abbrev);
    if (!ci) throw InvalidSpec(std::string("class map lacks class ") + abbrev);
    set.set(*ci);
  };
  if (axis > -90.0 && axis < -30.0) mark("LAD");
  if (axis > 90.0 && axis <= 180.0) mark("RAD");
  if (sinus && rate < 60.0) mark("SB");
  if (sinus && rate > 100.0) mark("STach");
  if (!sinus) mark("AF");
  if (sinus && rate >= 60.0 && rate <= 100.0 && axis >= -30.0 && axis <= 90.0)
    mark("SNR");
  return set;
}

std::vector<double> beat_times(const SynthSpec& spec) {
  validate_spec(spec);
  const double rr = 60.0 / spec.heart_rate_bpm;
  auto rng = make_rng(derive_seed(spec.seed, 1));
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);

  std::vector<double> times;
  double t = 0.4 * rr;  // lead-in before the first beat
  while (t < spec.duration_s) {
    times.push_back(t);
    double step = rr;
    if (spec.rhythm == Rhythm::afib) step = rr * (1.0 + jitter(rng));
    t += step;
  }
  return times;
}

EcgRecord generate_record(const SynthSpec& spec, const ClassMap& map,
                          const std::string& record_id) {
  validate_spec(spec);
  const ClassSet labels = label_rule(spec, map);
  if (labels.empty())
    throw InvalidSpec("spec yields no label (axis " +
                      std::to_string(spec.qrs_axis_degrees) + ", rate " +
                      std::to_string(spec.heart_rate_bpm) + ")");

  const int fs = spec.sampling_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  const double rr = 60.0 / spec.heart_rate_bpm;

  // per-beat wave placement, scaled with the cycle length
  const double sigma_r = 0.01 + 0.01 * std::min(rr, 1.2);
  const double p_offset = -0.28 * rr, sigma_p = std::clamp(0.05 * rr, 0.02, 0.05);
  const double t_offset = 0.30 * rr, sigma_t = std::clamp(0.07 * rr, 0.03, 0.09);
  const bool with_p = spec.rhythm == Rhythm::sinus;

  EcgRecord rec;
  rec.signal = Signal(kNumLeads, n);
  const auto beats = beat_times(spec);

  for (std::size_t lead = 0; lead < kNumLeads; ++lead) {
    double* row = rec.signal.row(lead);
    double r_amp, p_amp, t_amp;
    if (lead < 6) {
      // limb leads project the frontal-plane axis
      const double factor =
          std::cos((spec.qrs_axis_degrees - kLimbAngles[lead]) * kPi / 180.0);
      r_amp = kRAmplitude * factor;
      p_amp = kPAmplitude * factor;
      t_amp = kTAmplitude * factor;
    } else {
      r_amp = kPrecordialR[lead - 6];
      p_amp = kPAmplitude;
      t_amp = kTAmplitude;
    }
    for (double beat : beats) {
      if (with_p) add_wave(row, n, fs, beat + p_offset, sigma_p, p_amp);
      add_wave(row, n, fs, beat, sigma_r, r_amp);
      add_wave(row, n, fs, beat + t_offset, sigma_t, t_amp);
    }
  }

  if (spec.noise_std_mv > 0.0) {
    auto rng = make_rng(derive_seed(spec.seed, 2));
    std::normal_distribution<double> noise(0.0, spec.noise_std_mv);
    const double bound = 6.0 * spec.noise_std_mv;
    for (auto& v : rec.signal.data)
      v += std::clamp(noise(rng), -bound, bound);
  }

  auto demo_rng = make_rng(derive_seed(spec.seed, 3));
  rec.meta.record_id = record_id.empty() ? "synth" + std::to_string(spec.seed) : record_id;
  rec.meta.num_leads = static_cast<int>(kNumLeads);
  rec.meta.sampling_rate_hz = fs;
  rec.meta.num_samples = n;
  rec.meta.gain.fill(1000.0);
  rec.meta.baseline.fill(0);
  rec.meta.lead_names = {"I", "II", "III", "aVR", "aVL", "aVF",
                         "V1", "V2", "V3", "V4", "V5", "V6"};
  rec.meta.age_years = static_cast<int>(std::uniform_int_distribution<int>(25, 85)(demo_rng));
  rec.meta.sex = std::uniform_int_distribution<int>(0, 1)(demo_rng) ? Sex::male : Sex::female;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (labels.test(c)) rec.meta.dx_codes.push_back(map.primary_code(c));
  rec.labels = labels;
  return rec;
}

const std::vector<std::string>& dataset_classes() {
  static const std::vector<std::string> classes = {"SNR", "LAD", "RAD",
                                                   "SB",  "STach", "AF"};
  return classes;
}

std::vector<EcgRecord> generate_dataset(int n_per_class, double noise_std_mv,
                                        std::uint64_t seed, const ClassMap& map,
                                        double duration_s, int sampling_rate_hz) {
  if (n_per_class < 1) throw InvalidSpec("n_per_class must be >= 1");

  struct Region {
    const char* name;
    Rhythm rhythm;
    double rate_lo, rate_hi;
    double axis_lo, axis_hi;
  };
  // 5 bpm / 5 degree margins from every label boundary
  const Region regions[] = {
      {"SNR", Rhythm::sinus, 65.0, 95.0, -25.0, 85.0},
      {"LAD", Rhythm::sinus, 65.0, 95.0, -85.0, -35.0},
      {"RAD", Rhythm::sinus, 65.0, 95.0, 95.0, 175.0},
      {"SB", Rhythm::sinus, 40.0, 55.0, -25.0, 85.0},
      {"STach", Rhythm::sinus, 105.0, 145.0, -25.0, 85.0},
      {"AF", Rhythm::afib, 65.0, 95.0, -25.0, 85.0},
  };

  std::vector<EcgRecord> records;
  records.reserve(static_cast<std::size_t>(n_per_class) * 6);
  for (std::size_t r = 0; r < 6; ++r) {
    auto rng = make_rng(derive_seed(seed, 100 + r));
    std::uniform_real_distribution<double> rate(regions[r].rate_lo, regions[r].rate_hi);
    std::uniform_real_distribution<double> axis(regions[r].axis_lo, regions[r].axis_hi);
    for (int j = 0; j < n_per_class; ++j) {
      SynthSpec spec;
      spec.heart_rate_bpm = rate(rng);
      spec.qrs_axis_degrees = axis(rng);
      spec.rhythm = regions[r].rhythm;
      spec.noise_std_mv = noise_std_mv;
      spec.duration_s = duration_s;
      spec.sampling_rate_hz = sampling_rate_hz;
      spec.seed = derive_seed(seed, r, static_cast<std::uint64_t>(j));
      records.push_back(generate_record(spec, map));
    }
  }

  auto shuffle_rng = make_rng(derive_seed(seed, 999));
  std::shuffle(records.begin(), records.end(), shuffle_rng);
  char buf[16];
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "synth%05zu", i);
    records[i].meta.record_id = buf;
  }
  return records;
}

}  // namespace senet::synth
