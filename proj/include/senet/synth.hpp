#ifndef SENET_SYNTH_HPP
#define SENET_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "senet/record.hpp"

namespace senet::synth {

enum class Rhythm { sinus, afib };

struct SynthSpec {
  double heart_rate_bpm = 75.0;
  double qrs_axis_degrees = 30.0;  // in (-180, 180]
  Rhythm rhythm = Rhythm::sinus;
  double noise_std_mv = 0.0;
  double duration_s = 16.0;
  int sampling_rate_hz = 500;
  std::uint64_t seed = 0;
};

// Fixed label geometry:
//   LAD   iff axis in (-90,-30)          RAD   iff axis in (90,180]
//   SB    iff sinus and rate < 60        STach iff sinus and rate > 100
//   AF    iff rhythm == afib
//   SNR   iff sinus, rate in [60,100] and axis in [-30,90]
// Pure in the spec; independent of the noise draw.
ClassSet label_rule(const SynthSpec& spec, const ClassMap& map);

// R-peak instants in seconds. Sinus is strictly regular; afib jitters each
// interval by a uniform +-20%. Deterministic under spec.seed.
std::vector<double> beat_times(const SynthSpec& spec);

// Limb leads receive a P/R/T Gaussian beat train scaled by
// cos(axis - lead_angle); precordial leads carry fixed template amplitudes.
// Throws InvalidSpec when the spec is out of range or yields no label.
EcgRecord generate_record(const SynthSpec& spec, const ClassMap& map,
                          const std::string& record_id = "");

// The single-label regions sampled by generate_dataset, in order.
const std::vector<std::string>& dataset_classes();  // SNR,LAD,RAD,SB,STach,AF

// n_per_class records from each region, parameters drawn uniformly inside
// the region with a 5 degree / 5 bpm margin from every boundary; returns a
// seed-deterministic shuffled list with ids synth00000, synth00001, ...
std::vector<EcgRecord> generate_dataset(int n_per_class, double noise_std_mv,
                                        std::uint64_t seed, const ClassMap& map,
                                        double duration_s = 16.0,
                                        int sampling_rate_hz = 500);

}  // namespace senet::synth

#endif  // SENET_SYNTH_HPP
