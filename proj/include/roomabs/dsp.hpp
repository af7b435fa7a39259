#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "roomabs/core.hpp"
#include "roomabs/random.hpp"
#include "roomabs/rir.hpp"

namespace roomabs {

// Direct-form-II-transposed second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

using SosFilter = std::vector<Biquad>;

// Digital Butterworth band-pass of the given prototype order (the resulting
// filter has twice that order), designed by bilinear transform with
// prewarped edges.
SosFilter butterworth_bandpass(int order, double f_lo, double f_hi, double sample_rate);

// |H(f)| of an analog Butterworth band-pass of the given prototype order.
double butterworth_bandpass_magnitude(int order, double f_lo, double f_hi, double f);

// Complex response magnitude of a digital SOS filter at frequency f.
double sos_magnitude(const SosFilter& sos, double f, double sample_rate);

std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x);
// Forward-backward (zero-phase) application.
std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x);

// Octave band edges around a center: [fc/sqrt2, fc*sqrt2].
double band_lower_edge(std::size_t band);
double band_upper_edge(std::size_t band);

using BandSignals = std::array<std::vector<double>, kNumBands>;

// Zero-phase 3rd-order Butterworth octave filters. Throws SampleRateError when
// the top band's upper edge is at or above Nyquist.
BandSignals octave_filter_bank(const Rir& rir);

// Backward-integrated energy decay of one band.
struct DecayCurve {
  std::vector<double> energy;  // EDC[n] = sum_{m>=n} x[m]^2
  std::vector<double> db;      // 10 log10(EDC[n] / EDC[0])
  double sample_rate = 48000.0;

  // Builds a curve from dB values alone (energy normalized to 1 at n=0).
  static DecayCurve from_db(std::vector<double> db, double sample_rate);
};

using SchroederCurve = std::array<DecayCurve, kNumBands>;

// Throws UndefinedCurve for an all-zero signal.
DecayCurve backward_integrate(std::span<const double> band_signal, double sample_rate);

SchroederCurve schroeder_curves(const Rir& rir);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least-squares line through (x0 + i*dx, y[i]).
LineFit fit_line(std::span<const double> y, double x0, double dx);

struct RtEstimate {
  double rt = 0.0;          // seconds, extrapolated to -60 dB
  double start_db = -5.0;
  double depth_db = 30.0;
  double r_squared = 0.0;
  double slope_db_per_s = 0.0;
  std::size_t first = 0;    // fit window, inclusive sample indices
  std::size_t last = 0;
};

// First index whose dB value is at or below the threshold, or npos.
std::size_t first_crossing(std::span<const double> db, double threshold_db);

// Line fit between the first -5 dB and first -5-depth dB crossings.
// Throws InsufficientDecay when the curve never reaches -5-depth dB.
RtEstimate estimate_rt(const DecayCurve& curve, double depth_db, double start_db = -5.0);

// Kaiser-windowed sinc low-pass.
std::vector<double> kaiser_lowpass(std::size_t taps, double cutoff_hz, double sample_rate,
                                   double beta);
double kaiser_beta(double attenuation_db);

// Taps of the 48 kHz -> 16 kHz anti-alias filter.
const std::vector<double>& decimation_filter();

// Factor-3 decimation with delay-compensated linear-phase anti-alias filter.
// Throws SampleRateError unless the input is at 48 kHz.
Rir resample_48_to_16(const Rir& rir);

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

double mean_power(std::span<const double> x);

// Adds white Gaussian noise at the requested SNR. Signal power is measured
// over the first reference_s seconds (the whole input by default); the noise
// covers the whole input. snr_db = kNoNoise returns the input unchanged.
// Throws ZeroSignal for a silent reference.
Rir add_noise_snr(const Rir& rir, double snr_db, Rng& rng,
                  double reference_s = std::numeric_limits<double>::infinity());

inline constexpr std::size_t kInputLength = 8000;
inline constexpr double kModelSampleRate = 16000.0;

// 48 kHz RIR -> 8000-sample, 16 kHz, noisy, peak-normalized model input.
std::vector<float> preprocess(const Rir& rir, double snr_db, Rng& rng);

// Resample + truncate/zero-pad to the model window, without noise.
Rir model_window(const Rir& rir);

}  // namespace roomabs
