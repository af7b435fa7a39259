#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "roomabs/dsp.hpp"
#include "roomabs/error.hpp"

using namespace roomabs;

namespace {

Rir sine(double f, double fs, std::size_t n, double amp = 1.0) {
  Rir r;
  r.sample_rate = fs;
  r.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.samples[i] = amp * std::sin(2 * std::numbers::pi * f * i / fs);
  return r;
}

double energy(const std::vector<double>& x, std::size_t from = 0, std::size_t to = SIZE_MAX) {
  double e = 0;
  for (std::size_t i = from; i < std::min(to, x.size()); ++i) e += x[i] * x[i];
  return e;
}

Rir exp_decay(double tau, double fs, double seconds) {
  Rir r;
  r.sample_rate = fs;
  const auto n = static_cast<std::size_t>(seconds * fs);
  for (std::size_t i = 0; i < n; ++i) r.samples.push_back(std::exp(-(i / fs) / tau));
  return r;
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("1 kHz tone lands in the 1 kHz band") {
  const auto bands = octave_filter_bank(sine(1000, 48000, 48000));
  double total = 0;
  std::array<double, kNumBands> e{};
  for (std::size_t b = 0; b < kNumBands; ++b) total += e[b] = energy(bands[b]);
  for (std::size_t b = 0; b < kNumBands; ++b) {
    if (b != 3) CHECK(e[b] < e[3]);
  }
  CHECK(e[0] / total < 0.01);
  CHECK(e[1] / total < 0.01);
}

TEST_CASE("filter bank edge cases") {
  Rir zero;
  zero.samples.assign(1000, 0.0);
  for (const auto& b : octave_filter_bank(zero)) {
    for (double v : b) CHECK(v == 0.0);
  }
  CHECK_NOTHROW(octave_filter_bank(sine(1000, 16000, 1600)));
  CHECK_THROWS_AS(octave_filter_bank(sine(1000, 10000, 1000)), SampleRateError);
}

TEST_CASE("digital band-pass follows the analog Butterworth magnitude") {
  for (std::size_t b = 0; b < kNumBands; ++b) {
    const double lo = band_lower_edge(b), hi = band_upper_edge(b);
    const auto sos = butterworth_bandpass(3, lo, hi, 48000);
    const double fc = std::sqrt(lo * hi);
    CHECK(sos_magnitude(sos, fc, 48000) == doctest::Approx(1.0).epsilon(1e-6));
    // Prewarped edges sit at -3 dB exactly.
    CHECK(sos_magnitude(sos, lo, 48000) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
    CHECK(sos_magnitude(sos, hi, 48000) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
    CHECK(butterworth_bandpass_magnitude(3, lo, hi, fc) == doctest::Approx(1.0));
  }
}

TEST_CASE("zero-phase filtering does not shift a pulse") {
  Rir pulse;
  pulse.samples.assign(8192, 0.0);
  pulse.samples[4096] = 1.0;
  const auto sos = butterworth_bandpass(3, band_lower_edge(3), band_upper_edge(3), 48000);
  const auto y = sos_filtfilt(sos, pulse.samples);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) > std::abs(y[peak])) peak = i;
  }
  CHECK(peak == 4096);
}

TEST_CASE("backward integration") {
  const std::vector<double> ones{1, 1, 1, 1};
  const auto c = backward_integrate(ones, 48000);
  CHECK(c.energy == std::vector<double>{4, 3, 2, 1});
  CHECK(c.db[0] == 0.0);

  Rng rng(2);
  std::vector<double> x(500);
  for (auto& v : x) v = rng.normal();
  const auto noisy = backward_integrate(x, 48000);
  for (std::size_t i = 1; i < noisy.energy.size(); ++i) CHECK(noisy.energy[i] <= noisy.energy[i - 1]);

  CHECK_THROWS_AS(backward_integrate(std::vector<double>(10, 0.0), 48000), UndefinedCurve);
}

TEST_CASE("exponential decay integrates to a straight dB line") {
  // Infinite-tail geometric series truncated at N: EDC[n] ∝ q^n - q^N. Keep
  // N large so the tail term is negligible over the checked range.
  const auto r = exp_decay(0.05, 48000, 1.0);
  const auto c = backward_integrate(r.samples, r.sample_rate);
  const double slope = c.db[1] - c.db[0];
  for (std::size_t n = 1; n < 10000; ++n) {
    CHECK(c.db[n] - c.db[n - 1] == doctest::Approx(slope).epsilon(1e-6));
  }
}

TEST_CASE("RT from exponential decays matches the closed form") {
  for (double tau : {0.02, 0.05, 0.2}) {
    const auto r = exp_decay(tau, 48000, 12 * tau);
    const auto c = backward_integrate(r.samples, r.sample_rate);
    for (double depth : {10.0, 30.0}) {
      const auto est = estimate_rt(c, depth);
      const double expected = 60 * tau / (20 * std::log10(std::numbers::e));
      CHECK(est.rt == doctest::Approx(expected).epsilon(0.01));
      CHECK(est.r_squared > 0.9999);
    }
  }
  CHECK(60 * 0.05 / (20 * std::log10(std::numbers::e)) == doctest::Approx(0.3454).epsilon(1e-4));
}

TEST_CASE("RT needs the full decay range") {
  std::vector<double> db(1000);
  for (std::size_t i = 0; i < db.size(); ++i) db[i] = std::max(-20.0, -0.1 * double(i));
  CHECK_THROWS_AS(estimate_rt(DecayCurve::from_db(db, 1000), 30), InsufficientDecay);
  CHECK_NOTHROW(estimate_rt(DecayCurve::from_db(db, 1000), 10));
}

TEST_CASE("RT fit uses exactly the stated window") {
  // Two slopes with a knee at -8 dB.
  const double fs = 1000;
  std::vector<double> db;
  for (int i = 0; i < 2000; ++i) {
    const double t = i / fs;
    db.push_back(t < 0.08 ? -100 * t : -8 - 20 * (t - 0.08));
  }
  const auto est = estimate_rt(DecayCurve::from_db(db, fs), 10);

  // Brute-force oracle: scan for the window, then ordinary least squares.
  std::size_t first = 0, last = 0;
  while (db[first] > -5) ++first;
  while (db[last] > -15) ++last;
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<long double>(last - first + 1);
  for (std::size_t i = first; i <= last; ++i) {
    const long double x = i / fs, y = db[i];
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const long double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(est.first == first);
  CHECK(est.last == last);
  CHECK(est.slope_db_per_s == doctest::Approx(double(slope)).epsilon(1e-9));
  CHECK(est.rt == doctest::Approx(double(-60 / slope)).epsilon(1e-9));
}

TEST_CASE("RT is invariant to amplitude scaling") {
  auto r = exp_decay(0.1, 48000, 1.0);
  Rng rng(6);
  for (auto& v : r.samples) v *= rng.normal();
  const auto a = schroeder_curves(r);
  for (auto& v : r.samples) v *= 37.5;
  const auto b = schroeder_curves(r);
  for (std::size_t k = 2; k < kNumBands; ++k) {
    CHECK(estimate_rt(a[k], 20).rt == doctest::Approx(estimate_rt(b[k], 20).rt).epsilon(1e-9));
    CHECK(b[k].energy[0] == doctest::Approx(a[k].energy[0] * 37.5 * 37.5).epsilon(1e-9));
  }
}

TEST_CASE("line fit") {
  const std::vector<double> y{1, 3, 5, 7};
  const auto f = fit_line(y, 0, 1);
  CHECK(f.slope == doctest::Approx(2));
  CHECK(f.intercept == doctest::Approx(1));
  CHECK(f.r_squared == doctest::Approx(1));
}

TEST_CASE("resampler") {
  Rir dc;
  dc.samples.assign(48000, 1.0);
  const auto out = resample_48_to_16(dc);
  CHECK(out.samples.size() == 16000);
  CHECK(out.sample_rate == 16000);
  for (std::size_t i = 100; i < 15900; ++i) REQUIRE(std::abs(out.samples[i] - 1.0) < 1e-6);

  const auto pass = resample_48_to_16(sine(1000, 48000, 48000));
  const double amp = std::sqrt(2 * energy(pass.samples, 1000, 15000) / 14000);
  CHECK(amp == doctest::Approx(1.0).epsilon(0.01));

  const auto stop = resample_48_to_16(sine(7900, 48000, 48000));
  const double rms = std::sqrt(energy(stop.samples, 1000, 15000) / 14000);
  CHECK(20 * std::log10(rms / std::sqrt(0.5)) <= -60.0);

  CHECK_THROWS_AS(resample_48_to_16(sine(1000, 44100, 1000)), SampleRateError);
}

TEST_CASE("noise injection hits the requested SNR") {
  const auto clean = sine(440, 16000, 8000);
  Rng rng(1);
  const auto noisy = add_noise_snr(clean, 30, rng);
  std::vector<double> n(clean.samples.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = noisy.samples[i] - clean.samples[i];
  // Definition: noise power = signal power / 1000, up to sampling error.
  CHECK(mean_power(n) == doctest::Approx(mean_power(clean.samples) / 1000).epsilon(0.05));

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng r(seed);
    const auto out = add_noise_snr(clean, 20, r);
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = out.samples[i] - clean.samples[i];
    const double snr = 10 * std::log10(mean_power(clean.samples) / mean_power(n));
    REQUIRE(std::abs(snr - 20) < 0.5);
  }

  Rng r(3);
  CHECK(add_noise_snr(clean, kNoNoise, r).samples == clean.samples);
  Rir silent;
  silent.samples.assign(100, 0.0);
  CHECK_THROWS_AS(add_noise_snr(silent, 30, r), ZeroSignal);
}

TEST_CASE("preprocess output contract") {
  auto r = exp_decay(0.1, 48000, 0.6);
  Rng noise(4);
  for (auto& v : r.samples) v *= noise.normal();
  Rng a(10), b(10);
  const auto x = preprocess(r, 30, a);
  CHECK(x.size() == 8000);
  float peak = 0;
  for (float v : x) peak = std::max(peak, std::abs(v));
  CHECK(peak == 1.0f);

  auto scaled = r;
  for (auto& v : scaled.samples) v *= 10;
  const auto y = preprocess(scaled, 30, b);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == doctest::Approx(x[i]).epsilon(1e-5));
}

TEST_CASE("model window pads short responses") {
  Rir r;
  r.samples.assign(3000, 0.0);
  r.samples[0] = 1;
  const auto w = model_window(r);
  CHECK(w.samples.size() == kInputLength);
  CHECK(w.sample_rate == kModelSampleRate);
}

TEST_CASE("Kaiser design") {
  CHECK(kaiser_beta(80) == doctest::Approx(0.1102 * (80 - 8.7)));
  const auto& h = decimation_filter();
  CHECK(h.size() == 241);
  CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]));
}

}
