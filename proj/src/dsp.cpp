#include "roomabs/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "roomabs/error.hpp"

namespace roomabs {

using cd = std::complex<double>;

SosFilter butterworth_bandpass(int order, double f_lo, double f_hi, double sample_rate) {
  if (order < 1 || f_lo <= 0.0 || f_hi <= f_lo || f_hi >= sample_rate / 2.0) {
    throw InvalidArgument("invalid band-pass design request");
  }
  const double fs2 = 2.0 * sample_rate;
  const double w_lo = fs2 * std::tan(std::numbers::pi * f_lo / sample_rate);
  const double w_hi = fs2 * std::tan(std::numbers::pi * f_hi / sample_rate);
  const double w0 = std::sqrt(w_lo * w_hi);
  const double bw = w_hi - w_lo;

  // Analog low-pass prototype poles -> band-pass poles (upper half plane).
  std::vector<cd> analog;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    const cd p = std::polar(1.0, theta);
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0 * w0);
    for (const cd s : {half + root, half - root}) {
      if (s.imag() > 0.0) analog.push_back(s);
    }
  }
  if (analog.size() != static_cast<std::size_t>(order)) {
    throw InvalidArgument("band too wide for conjugate-pair band-pass design");
  }

  SosFilter sos;
  for (const cd s : analog) {
    const cd z = (fs2 + s) / (fs2 - s);
    Biquad q;
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    sos.push_back(q);
  }
  // Unit gain at the (digital) geometric center.
  const double fc = sample_rate / std::numbers::pi * std::atan(w0 / fs2);
  const double g = 1.0 / sos_magnitude(sos, fc, sample_rate);
  const double per_section = std::pow(g, 1.0 / static_cast<double>(sos.size()));
  for (auto& q : sos) {
    q.b0 *= per_section;
    q.b1 *= per_section;
    q.b2 *= per_section;
  }
  return sos;
}

double butterworth_bandpass_magnitude(int order, double f_lo, double f_hi, double f) {
  if (f <= 0.0) return 0.0;
  const double f0sq = f_lo * f_hi;
  const double ratio = (f * f - f0sq) / (f * (f_hi - f_lo));
  return 1.0 / std::sqrt(1.0 + std::pow(ratio * ratio, order));
}

double sos_magnitude(const SosFilter& sos, double f, double sample_rate) {
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / sample_rate);
  const cd z2 = z1 * z1;
  cd h = 1.0;
  for (const auto& q : sos) {
    h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
  }
  return std::abs(h);
}

std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& q : sos) {
    double s1 = 0.0;
    double s2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x) {
  auto y = sos_filter(sos, x);
  std::reverse(y.begin(), y.end());
  y = sos_filter(sos, y);
  std::reverse(y.begin(), y.end());
  return y;
}

double band_lower_edge(std::size_t band) { return kBandCenters[band] / std::numbers::sqrt2; }
double band_upper_edge(std::size_t band) { return kBandCenters[band] * std::numbers::sqrt2; }

BandSignals octave_filter_bank(const Rir& rir) {
  if (band_upper_edge(kNumBands - 1) >= rir.sample_rate / 2.0) {
    throw SampleRateError("sample rate " + std::to_string(rir.sample_rate) +
                          " Hz too low for the 4 kHz octave band");
  }
  BandSignals out;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    const auto sos =
        butterworth_bandpass(3, band_lower_edge(b), band_upper_edge(b), rir.sample_rate);
    out[b] = sos_filtfilt(sos, rir.samples);
  }
  return out;
}

DecayCurve DecayCurve::from_db(std::vector<double> db, double sample_rate) {
  DecayCurve c;
  c.energy.resize(db.size());
  std::transform(db.begin(), db.end(), c.energy.begin(),
                 [](double v) { return std::pow(10.0, v / 10.0); });
  c.db = std::move(db);
  c.sample_rate = sample_rate;
  return c;
}

DecayCurve backward_integrate(std::span<const double> band_signal, double sample_rate) {
  DecayCurve c;
  c.sample_rate = sample_rate;
  c.energy.resize(band_signal.size());
  double acc = 0.0;
  for (std::size_t i = band_signal.size(); i-- > 0;) {
    if (!std::isfinite(band_signal[i])) throw InvalidArgument("non-finite sample");
    acc += band_signal[i] * band_signal[i];
    c.energy[i] = acc;
  }
  if (band_signal.empty() || !(acc > 0.0)) {
    throw UndefinedCurve("energy decay curve of an all-zero signal");
  }
  c.db.resize(c.energy.size());
  const double total = c.energy.front();
  for (std::size_t i = 0; i < c.energy.size(); ++i) {
    c.db[i] = 10.0 * std::log10(c.energy[i] / total);
  }
  return c;
}

SchroederCurve schroeder_curves(const Rir& rir) {
  const auto bands = octave_filter_bank(rir);
  SchroederCurve curves;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    curves[b] = backward_integrate(bands[b], rir.sample_rate);
  }
  return curves;
}

LineFit fit_line(std::span<const double> y, double x0, double dx) {
  const std::size_t n = y.size();
  if (n < 2) throw InvalidArgument("line fit needs at least two points");
  // Centered abscissa for conditioning.
  const double xc = x0 + dx * static_cast<double>(n - 1) / 2.0;
  double ym = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dxi = x0 + dx * static_cast<double>(i) - xc;
    const double dyi = y[i] - ym;
    sxx += dxi * dxi;
    sxy += dxi * dyi;
    syy += dyi * dyi;
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ym - fit.slope * xc;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

std::size_t first_crossing(std::span<const double> db, double threshold_db) {
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (db[i] <= threshold_db) return i;
  }
  return static_cast<std::size_t>(-1);
}

RtEstimate estimate_rt(const DecayCurve& curve, double depth_db, double start_db) {
  if (!(depth_db > 0.0)) throw InvalidArgument("decay depth must be positive");
  const double stop_db = start_db - depth_db;
  const std::size_t first = first_crossing(curve.db, start_db);
  const std::size_t last = first_crossing(curve.db, stop_db);
  constexpr auto npos = static_cast<std::size_t>(-1);
  if (first == npos || last == npos) {
    throw InsufficientDecay("decay curve never reaches " + std::to_string(stop_db) + " dB");
  }
  // EDC[0] is 0 dB, so the -inf tail of a finite curve cannot be reached
  // before a finite threshold; guard only against degenerate windows.
  if (last <= first) throw InsufficientDecay("decay window has fewer than two samples");
  std::size_t end = last;
  while (end > first && !std::isfinite(curve.db[end])) --end;
  if (end <= first) throw InsufficientDecay("decay window has fewer than two finite samples");

  const double dt = 1.0 / curve.sample_rate;
  const auto window = std::span<const double>(curve.db).subspan(first, end - first + 1);
  const LineFit fit = fit_line(window, static_cast<double>(first) * dt, dt);
  if (!(fit.slope < 0.0)) throw InsufficientDecay("decay slope is not negative");

  RtEstimate est;
  est.rt = -60.0 / fit.slope;
  est.start_db = start_db;
  est.depth_db = depth_db;
  est.r_squared = fit.r_squared;
  est.slope_db_per_s = fit.slope;
  est.first = first;
  est.last = end;
  return est;
}

double kaiser_beta(double attenuation_db) {
  if (attenuation_db > 50.0) return 0.1102 * (attenuation_db - 8.7);
  if (attenuation_db >= 21.0) {
    return 0.5842 * std::pow(attenuation_db - 21.0, 0.4) + 0.07886 * (attenuation_db - 21.0);
  }
  return 0.0;
}

std::vector<double> kaiser_lowpass(std::size_t taps, double cutoff_hz, double sample_rate,
                                   double beta) {
  if (taps % 2 == 0) throw InvalidArgument("linear-phase low-pass needs an odd tap count");
  std::vector<double> h(taps);
  const double mid = static_cast<double>(taps - 1) / 2.0;
  const double wc = 2.0 * cutoff_hz / sample_rate;  // normalized to Nyquist = 1
  const double denom = std::cyl_bessel_i(0.0, beta);
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - mid;
    const double sinc = t == 0.0 ? wc : std::sin(std::numbers::pi * wc * t) / (std::numbers::pi * t);
    const double r = t / mid;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[i] = sinc * w;
  }
  const double dc = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v /= dc;
  return h;
}

namespace {
constexpr std::size_t kDecimation = 3;
constexpr std::size_t kDecimationTaps = 241;  // group delay 120 = 3 * 40 samples
constexpr double kDecimationCutoff = 7200.0;
constexpr double kDecimationStopbandDb = 80.0;
}  // namespace

const std::vector<double>& decimation_filter() {
  static const std::vector<double> taps = kaiser_lowpass(
      kDecimationTaps, kDecimationCutoff, 48000.0, kaiser_beta(kDecimationStopbandDb));
  return taps;
}

Rir resample_48_to_16(const Rir& rir) {
  if (rir.sample_rate != 48000.0) {
    throw SampleRateError("resampler expects 48 kHz input, got " +
                          std::to_string(rir.sample_rate) + " Hz");
  }
  const auto& h = decimation_filter();
  const auto delay = static_cast<std::ptrdiff_t>((h.size() - 1) / 2);
  const auto n_in = static_cast<std::ptrdiff_t>(rir.samples.size());
  Rir out;
  out.sample_rate = 16000.0;
  out.samples.resize(rir.samples.size() / kDecimation);
  for (std::size_t m = 0; m < out.samples.size(); ++m) {
    // y[m] = sum_k h[k] x[3m + delay - k]
    const auto centre = static_cast<std::ptrdiff_t>(kDecimation * m) + delay;
    const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, centre - (n_in - 1));
    const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h.size()) - 1, centre);
    double acc = 0.0;
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) acc += h[k] * rir.samples[centre - k];
    out.samples[m] = acc;
  }
  return out;
}

double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

Rir add_noise_snr(const Rir& rir, double snr_db, Rng& rng, double reference_s) {
  if (snr_db == kNoNoise) return rir;
  std::span<const double> ref(rir.samples);
  if (std::isfinite(reference_s)) {
    const auto n = static_cast<std::size_t>(std::llround(reference_s * rir.sample_rate));
    ref = ref.first(std::min(n, ref.size()));
  }
  const double power = mean_power(ref);
  if (!(power > 0.0)) throw ZeroSignal("cannot set an SNR relative to a silent signal");
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Rir out = rir;
  for (double& v : out.samples) v += sigma * rng.normal();
  return out;
}

Rir model_window(const Rir& rir) {
  Rir out = resample_48_to_16(rir);
  out.samples.resize(kInputLength, 0.0);
  return out;
}

std::vector<float> preprocess(const Rir& rir, double snr_db, Rng& rng) {
  const Rir noisy = add_noise_snr(model_window(rir), snr_db, rng);
  double peak = 0.0;
  for (double v : noisy.samples) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw ZeroSignal("cannot normalize a silent signal");
  std::vector<float> out(kInputLength);
  for (std::size_t i = 0; i < kInputLength; ++i) {
    out[i] = static_cast<float>(noisy.samples[i] / peak);
  }
  return out;
}

}  // namespace roomabs
