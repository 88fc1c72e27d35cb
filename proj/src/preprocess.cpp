#include "senet/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "senet/errors.hpp"
#include "senet/inference.hpp"

namespace senet::preprocess {

Signal resample_linear(const Signal& signal, int fs_in, int fs_out) {
  if (fs_in < 1 || fs_out < 1) throw DegenerateSignal("sampling rates must be >= 1");
  if (signal.samples < 2) throw DegenerateSignal("resampling needs at least 2 samples");
  if (fs_in == fs_out) return signal;

  const std::size_t l_in = signal.samples;
  const std::size_t l_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(l_in) * fs_out / fs_in));
  if (l_out < 1) throw DegenerateSignal("resampled length would be empty");

  Signal out(signal.leads, l_out);
  const double step =
      l_out > 1 ? static_cast<double>(l_in - 1) / static_cast<double>(l_out - 1) : 0.0;
  for (std::size_t lead = 0; lead < signal.leads; ++lead) {
    const double* src = signal.row(lead);
    double* dst = out.row(lead);
    for (std::size_t j = 0; j < l_out; ++j) {
      const double pos = static_cast<double>(j) * step;
      const std::size_t i0 = std::min(static_cast<std::size_t>(pos), l_in - 2);
      const double frac = pos - static_cast<double>(i0);
      dst[j] = src[i0] + frac * (src[i0 + 1] - src[i0]);
    }
  }
  return out;
}

EcgRecord resample_record(const EcgRecord& record, int fs_out) {
  EcgRecord out = record;
  out.signal = resample_linear(record.signal, record.meta.sampling_rate_hz, fs_out);
  out.meta.sampling_rate_hz = fs_out;
  out.meta.num_samples = out.signal.samples;
  return out;
}

std::vector<Signal> fit_length(const Signal& signal, ad::Mode mode,
                               std::mt19937_64& rng) {
  if (signal.samples < 1) throw DegenerateSignal("fit_length needs >= 1 sample");
  if (mode == ad::Mode::eval) return inference::segment_patches(signal);

  if (signal.samples == kModelLength) return {signal};

  Signal out(signal.leads, kModelLength);
  if (signal.samples < kModelLength) {
    // end-pad with zeros
    for (std::size_t lead = 0; lead < signal.leads; ++lead)
      std::copy_n(signal.row(lead), signal.samples, out.row(lead));
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, signal.samples - kModelLength);
    const std::size_t offset = dist(rng);
    for (std::size_t lead = 0; lead < signal.leads; ++lead)
      std::copy_n(signal.row(lead) + offset, kModelLength, out.row(lead));
  }
  return {std::move(out)};
}

std::array<double, kDemographicDim> encode_demographics(const Demographics& d) {
  if (d.age_years && (*d.age_years < 0 || *d.age_years > 130))
    throw InvalidAge("age " + std::to_string(*d.age_years) + " outside [0,130]");

  std::array<double, kDemographicDim> v{};
  if (d.age_years) {
    v[0] = std::clamp(static_cast<double>(*d.age_years) / 100.0, 0.0, 1.0);
    v[1] = 0.0;
  } else {
    v[0] = 0.0;
    v[1] = 1.0;  // age-missing mask
  }
  if (d.sex) {
    v[2] = *d.sex == Sex::female ? 1.0 : 0.0;
    v[3] = *d.sex == Sex::male ? 1.0 : 0.0;
    v[4] = 0.0;
  } else {
    v[4] = 1.0;  // sex-missing mask
  }
  // indices 5-9 stay zero so the fused feature width comes out at 522
  return v;
}

}  // namespace senet::preprocess
