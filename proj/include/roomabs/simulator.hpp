#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "roomabs/core.hpp"
#include "roomabs/rir.hpp"

namespace roomabs {

struct AirConditions {
  bool enabled = true;
  double temperature_c = 20.0;
  double relative_humidity = 0.42;  // fraction, not percent
  double pressure_kpa = 101.325;
};

inline constexpr int kUnboundedOrder = std::numeric_limits<int>::max();

struct SimConfig {
  double sample_rate = 48000.0;
  std::size_t n_rays = 50000;
  int max_image_order = 50;
  double max_time = 0.5;
  AirConditions air;
  double receiver_radius = 0.1;
  double speed_of_sound = 343.0;
  bool diffuse = true;  // false disables diffuse rain (specular-only ablation)

  // 50,000 rays, image order 50.
  static SimConfig paper();
  // 10,000 rays, image order 50.
  static SimConfig fast();

  void validate() const;
};

struct Arrival {
  double time = 0.0;     // seconds after emission
  BandValues energy{};   // per band, >= 0
  double polarity = 1.0; // +1 or -1
};

struct Echogram {
  std::vector<Arrival> specular;  // sorted by time
  std::vector<Arrival> diffuse;   // one entry per occupied output sample
};

// ISO 9613-1 pure-tone energy attenuation coefficient in 1/m at frequency f.
double air_absorption_coefficient(double frequency_hz, const AirConditions& air);

// exp(-m(band) * distance); 1 when air absorption is disabled.
double air_attenuation(double frequency_hz, double distance_m, const AirConditions& air);

// Mirror-image lattice up to max_image_order, pruned to the time window.
// Energy per arrival: (1/d^2) * prod over reflections of (1-alpha)(1-s) * air.
std::vector<Arrival> enumerate_image_sources(const RoomSpec& spec, const SimConfig& config);

// Where the emitted diffuse-rain energy ended up, per band, in ray units
// (total emitted = 1 per band).
struct TraceLedger {
  BandValues emitted{};
  BandValues received{};
  BandValues absorbed{};
  BandValues air{};
  BandValues expired{};          // still in flight when the time window closed
  BandValues below_threshold{};  // rays dropped under 1e-6 of their initial energy

  BandValues accounted() const;
};

// Diffuse-rain tracing. At every wall hit the ray deposits the scattered
// fraction that falls on the receiver sphere, then carries on with the rest of
// its reflected energy; its new direction is Lambertian with probability s(b)
// and specular otherwise. Each band is traced separately.
std::vector<Arrival> trace_diffuse_rain(const RoomSpec& spec, const SimConfig& config,
                                        std::uint64_t seed, TraceLedger* ledger = nullptr);

// 512 taps cut off the 125 Hz band's response (about -4 dB at its centre);
// 2048 keep more than 99.9% of its energy.
inline constexpr std::size_t kKernelTaps = 2048;
inline constexpr std::size_t kKernelGrid = 32768;

// Minimum-phase octave band kernel (Butterworth magnitude, cepstral folding,
// half-Hann tail fade).
std::vector<double> design_band_kernel(std::size_t band, double sample_rate);

// Kernels for all bands, cached per sample rate.
const std::array<std::vector<double>, kNumBands>& band_kernels(double sample_rate);

// Sum over bands of (amplitude sequence * band kernel). Amplitude of an
// arrival is polarity * sqrt(energy), placed at round(time * fs).
Rir render_rir(const Echogram& echogram, const SimConfig& config);

Echogram simulate_echogram(const RoomSpec& spec, const SimConfig& config, std::uint64_t seed);

Rir simulate(const RoomSpec& spec, const SimConfig& config, std::uint64_t seed);

// Tabular dump: stream, time_s, e125 ... e4000.
void write_echogram(std::ostream& out, const Echogram& echogram);

}  // namespace roomabs
