#ifndef SENET_PREPROCESS_HPP
#define SENET_PREPROCESS_HPP

#include <array>
#include <random>

#include "senet/autodiff.hpp"
#include "senet/record.hpp"

namespace senet::preprocess {

inline constexpr int kModelRateHz = 257;
inline constexpr std::size_t kModelLength = 4096;
inline constexpr std::size_t kDemographicDim = 10;

struct ModelInput {
  Signal signal;  // 12 x 4096
  std::array<double, kDemographicDim> demographics;
};

// Endpoint-preserving linear resampling: L' = round(L * fs_out/fs_in) and
// output j interpolates the input at position j*(L-1)/(L'-1). Equal rates
// return the input unchanged.
Signal resample_linear(const Signal& signal, int fs_in, int fs_out = kModelRateHz);
EcgRecord resample_record(const EcgRecord& record, int fs_out = kModelRateHz);

// Train mode returns exactly one 12x4096 matrix: shorter signals are
// end-padded with zeros, longer ones clipped at a uniformly random offset.
// Eval mode returns the overlapping patch decomposition.
std::vector<Signal> fit_length(const Signal& signal, ad::Mode mode,
                               std::mt19937_64& rng);

// Layout: [age/100 clamped, age-missing, female, male, sex-missing, 5 zeros].
std::array<double, kDemographicDim> encode_demographics(const Demographics& d);

}  // namespace senet::preprocess

#endif  // SENET_PREPROCESS_HPP
