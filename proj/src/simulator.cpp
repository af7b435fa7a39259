#include "roomabs/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>

#include "roomabs/dsp.hpp"
#include "roomabs/error.hpp"
#include "roomabs/fft.hpp"
#include "roomabs/parallel.hpp"
#include "roomabs/random.hpp"

namespace roomabs {

SimConfig SimConfig::paper() { return SimConfig{}; }

SimConfig SimConfig::fast() {
  SimConfig c;
  c.n_rays = 10000;
  return c;
}

void SimConfig::validate() const {
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be positive");
  if (!(max_time > 0.0)) throw InvalidArgument("max_time must be positive");
  if (max_image_order < 0) throw InvalidArgument("max_image_order must be >= 0");
  if (!(speed_of_sound > 0.0)) throw InvalidArgument("speed of sound must be positive");
  if (!(receiver_radius > 0.0)) throw InvalidArgument("receiver radius must be positive");
}

double air_absorption_coefficient(double frequency_hz, const AirConditions& air) {
  constexpr double kRefPressure = 101.325;  // kPa
  constexpr double kRefTemp = 293.15;       // K
  constexpr double kTriplePoint = 273.16;   // K
  const double t = air.temperature_c + 273.15;
  const double pa = air.pressure_kpa / kRefPressure;
  const double tr = t / kRefTemp;
  const double psat = std::pow(10.0, -6.8346 * std::pow(kTriplePoint / t, 1.261) + 4.6151);
  const double h = 100.0 * air.relative_humidity * psat / pa;  // molar %, from RH in [0,1]
  const double fro = pa * (24.0 + 4.04e4 * h * (0.02 + h) / (0.391 + h));
  const double frn =
      pa * std::pow(tr, -0.5) * (9.0 + 280.0 * h * std::exp(-4.170 * (std::pow(tr, -1.0 / 3.0) - 1.0)));
  const double f2 = frequency_hz * frequency_hz;
  const double db_per_m =
      8.686 * f2 *
      (1.84e-11 / pa * std::sqrt(tr) +
       std::pow(tr, -2.5) * (0.01275 * std::exp(-2239.1 / t) / (fro + f2 / fro) +
                             0.1068 * std::exp(-3352.0 / t) / (frn + f2 / frn)));
  // dB of level per metre -> natural-log energy coefficient.
  return db_per_m * std::numbers::ln10 / 10.0;
}

double air_attenuation(double frequency_hz, double distance_m, const AirConditions& air) {
  if (!air.enabled) return 1.0;
  return std::exp(-air_absorption_coefficient(frequency_hz, air) * distance_m);
}

namespace {

BandValues air_coefficients(const AirConditions& air) {
  BandValues m{};
  if (air.enabled) {
    for (std::size_t b = 0; b < kNumBands; ++b) m[b] = air_absorption_coefficient(kBandCenters[b], air);
  }
  return m;
}

struct AxisImage {
  double offset;        // image coordinate minus receiver coordinate
  int low_hits;         // reflections on the wall at 0
  int high_hits;        // reflections on the wall at L
  int order() const { return low_hits + high_hits; }
};

std::vector<AxisImage> axis_images(double length, double src, double rcv, int max_order,
                                   double radius) {
  std::vector<AxisImage> out;
  const int n_max = static_cast<int>(std::ceil(radius / (2.0 * length))) + 1;
  for (int n = -n_max; n <= n_max; ++n) {
    for (int q = 0; q <= 1; ++q) {
      AxisImage img;
      img.offset = (1 - 2 * q) * src + 2.0 * n * length - rcv;
      img.low_hits = std::abs(n - q);
      img.high_hits = std::abs(n);
      if (img.order() > max_order || std::abs(img.offset) > radius) continue;
      out.push_back(img);
    }
  }
  std::sort(out.begin(), out.end(), [](const AxisImage& a, const AxisImage& b) {
    return std::abs(a.offset) < std::abs(b.offset) ||
           (std::abs(a.offset) == std::abs(b.offset) && a.offset < b.offset);
  });
  return out;
}

// reflectance^k per band, k = 0..max_hits.
std::vector<BandValues> power_table(const SurfaceAcoustics& s, int max_hits) {
  std::vector<BandValues> table(static_cast<std::size_t>(max_hits) + 1);
  for (std::size_t b = 0; b < kNumBands; ++b) {
    const double r = (1.0 - s.absorption[b]) * (1.0 - s.scattering[b]);
    double acc = 1.0;
    for (auto& row : table) {
      row[b] = acc;
      acc *= r;
    }
  }
  return table;
}

}  // namespace

std::vector<Arrival> enumerate_image_sources(const RoomSpec& spec, const SimConfig& config) {
  spec.validate();
  config.validate();
  const auto& g = spec.geometry;
  const double radius = config.speed_of_sound * config.max_time;
  const int order = config.max_image_order;
  const auto xs = axis_images(g.lx, spec.source.x, spec.receiver.x, order, radius);
  const auto ys = axis_images(g.ly, spec.source.y, spec.receiver.y, order, radius);
  const auto zs = axis_images(g.lz, spec.source.z, spec.receiver.z, order, radius);

  const auto max_hits = [](const std::vector<AxisImage>& v) {
    int m = 0;
    for (const auto& i : v) m = std::max({m, i.low_hits, i.high_hits});
    return m;
  };
  const auto table = [&](Surface s, const std::vector<AxisImage>& v) {
    return power_table(spec.surface(s), max_hits(v));
  };
  const auto west = table(Surface::kWest, xs), east = table(Surface::kEast, xs);
  const auto south = table(Surface::kSouth, ys), north = table(Surface::kNorth, ys);
  const auto floor = table(Surface::kFloor, zs), ceiling = table(Surface::kCeiling, zs);
  const BandValues air_m = air_coefficients(config.air);
  const double r2max = radius * radius;

  std::vector<std::vector<Arrival>> slabs(xs.size());
  parallel_for(xs.size(), [&](std::size_t ix) {
    const AxisImage& ax = xs[ix];
    auto& out = slabs[ix];
    const double dx2 = ax.offset * ax.offset;
    for (const AxisImage& ay : ys) {
      const double dxy2 = dx2 + ay.offset * ay.offset;
      if (dxy2 > r2max) break;  // ys sorted by |offset|
      const int order_xy = ax.order() + ay.order();
      if (order_xy > order) continue;
      BandValues partial{};
      for (std::size_t b = 0; b < kNumBands; ++b) {
        partial[b] = west[ax.low_hits][b] * east[ax.high_hits][b] * south[ay.low_hits][b] *
                     north[ay.high_hits][b];
      }
      for (const AxisImage& az : zs) {
        const double d2 = dxy2 + az.offset * az.offset;
        if (d2 > r2max) break;
        if (order_xy + az.order() > order) continue;
        if (d2 <= 0.0) throw InvalidArgument("source and receiver coincide");
        const double d = std::sqrt(d2);
        Arrival a;
        a.time = d / config.speed_of_sound;
        for (std::size_t b = 0; b < kNumBands; ++b) {
          a.energy[b] = partial[b] * floor[az.low_hits][b] * ceiling[az.high_hits][b] *
                        std::exp(-air_m[b] * d) / d2;
        }
        out.push_back(a);
      }
    }
  });

  std::vector<Arrival> arrivals;
  for (auto& slab : slabs) arrivals.insert(arrivals.end(), slab.begin(), slab.end());
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const Arrival& a, const Arrival& b) { return a.time < b.time; });
  return arrivals;
}

BandValues TraceLedger::accounted() const {
  BandValues out{};
  for (std::size_t b = 0; b < kNumBands; ++b) {
    out[b] = received[b] + absorbed[b] + air[b] + expired[b] + below_threshold[b];
  }
  return out;
}

namespace {

constexpr std::size_t kRaysPerBlock = 1024;
constexpr double kEnergyFloor = 1e-6;

struct BlockResult {
  std::vector<double> histogram;  // received energy per output sample
  double received = 0.0, absorbed = 0.0, air = 0.0, expired = 0.0, below = 0.0;
  std::size_t rays = 0;
};

struct Hit {
  double t;
  int axis;
  bool high;
};

Surface hit_surface(int axis, bool high) {
  static constexpr Surface kLow[3] = {Surface::kWest, Surface::kSouth, Surface::kFloor};
  static constexpr Surface kHigh[3] = {Surface::kEast, Surface::kNorth, Surface::kCeiling};
  return high ? kHigh[axis] : kLow[axis];
}

void trace_block(const RoomSpec& spec, const SimConfig& config, std::size_t band,
                 std::size_t n_rays_block, double air_m, Rng& rng, BlockResult& res) {
  const double dims[3] = {spec.geometry.lx, spec.geometry.ly, spec.geometry.lz};
  const double rcv[3] = {spec.receiver.x, spec.receiver.y, spec.receiver.z};
  const double max_path = config.speed_of_sound * config.max_time;
  const double e0 = 1.0 / static_cast<double>(config.n_rays);
  const double rs = config.receiver_radius;
  const double fs_per_c = config.sample_rate / config.speed_of_sound;

  for (std::size_t r = 0; r < n_rays_block; ++r) {
    double p[3] = {spec.source.x, spec.source.y, spec.source.z};
    double d[3];
    {
      const double z = rng.uniform(-1.0, 1.0);
      const double phi = 2.0 * std::numbers::pi * rng.uniform();
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      d[0] = rho * std::cos(phi);
      d[1] = rho * std::sin(phi);
      d[2] = z;
    }
    double energy = e0;
    double path = 0.0;
    while (true) {
      Hit hit{std::numeric_limits<double>::infinity(), 0, false};
      for (int a = 0; a < 3; ++a) {
        if (d[a] > 0.0) {
          const double t = (dims[a] - p[a]) / d[a];
          if (t < hit.t) hit = {t, a, true};
        } else if (d[a] < 0.0) {
          const double t = -p[a] / d[a];
          if (t < hit.t) hit = {t, a, false};
        }
      }
      if (path + hit.t > max_path) {
        res.expired += energy;
        break;
      }
      const double after_air = energy * std::exp(-air_m * hit.t);
      res.air += energy - after_air;
      energy = after_air;
      path += hit.t;
      for (int a = 0; a < 3; ++a) {
        p[a] = a == hit.axis ? (hit.high ? dims[a] : 0.0)
                             : std::clamp(p[a] + hit.t * d[a], 0.0, dims[a]);
      }

      const Surface surface = hit_surface(hit.axis, hit.high);
      const double alpha = spec.surface(surface).absorption[band];
      const double scatter = spec.surface(surface).scattering[band];
      res.absorbed += energy * alpha;
      double reflected = energy * (1.0 - alpha);

      if (scatter > 0.0 && reflected > 0.0) {
        double v[3] = {rcv[0] - p[0], rcv[1] - p[1], rcv[2] - p[2]};
        const double dist = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        const double inward = hit.high ? -1.0 : 1.0;
        const double cos_r = inward * v[hit.axis] / dist;
        if (cos_r > 0.0) {
          const double ratio = rs / dist;
          const double solid =
              dist <= rs ? 2.0 * std::numbers::pi
                         : 2.0 * std::numbers::pi * (1.0 - std::sqrt(1.0 - ratio * ratio));
          const double deposit = reflected * scatter * cos_r / std::numbers::pi * solid;
          reflected -= deposit;
          const double arrival_path = path + dist;
          if (arrival_path <= max_path) {
            const double received = deposit * std::exp(-air_m * dist);
            res.air += deposit - received;
            res.received += received;
            const auto bin = static_cast<std::size_t>(std::lround(arrival_path * fs_per_c));
            res.histogram[std::min(bin, res.histogram.size() - 1)] += received;
          } else {
            res.expired += deposit;
          }
        }
      }
      energy = reflected;
      if (energy < kEnergyFloor * e0) {
        res.below += energy;
        break;
      }

      if (scatter > 0.0 && rng.uniform() < scatter) {
        // Lambertian about the inward normal.
        const double cos_t = std::sqrt(rng.uniform());
        const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        const int u = (hit.axis + 1) % 3;
        const int w = (hit.axis + 2) % 3;
        d[hit.axis] = (hit.high ? -1.0 : 1.0) * cos_t;
        d[u] = sin_t * std::cos(phi);
        d[w] = sin_t * std::sin(phi);
      } else {
        d[hit.axis] = -d[hit.axis];
      }
    }
  }
}

std::size_t window_samples(const SimConfig& config) {
  return static_cast<std::size_t>(std::floor(config.max_time * config.sample_rate)) + 1;
}

}  // namespace

std::vector<Arrival> trace_diffuse_rain(const RoomSpec& spec, const SimConfig& config,
                                        std::uint64_t seed, TraceLedger* ledger) {
  spec.validate();
  config.validate();
  if (ledger) *ledger = TraceLedger{};
  if (config.n_rays == 0 || !config.diffuse) return {};

  const std::size_t n_bins = window_samples(config);
  const std::size_t blocks_per_band = (config.n_rays + kRaysPerBlock - 1) / kRaysPerBlock;
  const BandValues air_m = air_coefficients(config.air);

  std::vector<BlockResult> results(kNumBands * blocks_per_band);
  parallel_for(results.size(), [&](std::size_t job) {
    const std::size_t band = job / blocks_per_band;
    const std::size_t block = job % blocks_per_band;
    const std::size_t count = std::min(kRaysPerBlock, config.n_rays - block * kRaysPerBlock);
    Rng rng(derive_seed(derive_seed(seed, band), block));
    BlockResult& res = results[job];
    res.histogram.assign(n_bins, 0.0);
    res.rays = count;
    trace_block(spec, config, band, count, air_m[band], rng, res);
  });

  // Merge in job order so the sums do not depend on scheduling.
  std::vector<BandValues> bins(n_bins, BandValues{});
  for (std::size_t job = 0; job < results.size(); ++job) {
    const std::size_t band = job / blocks_per_band;
    const BlockResult& res = results[job];
    for (std::size_t n = 0; n < n_bins; ++n) bins[n][band] += res.histogram[n];
    if (ledger) {
      ledger->emitted[band] +=
          static_cast<double>(res.rays) / static_cast<double>(config.n_rays);
      ledger->received[band] += res.received;
      ledger->absorbed[band] += res.absorbed;
      ledger->air[band] += res.air;
      ledger->expired[band] += res.expired;
      ledger->below_threshold[band] += res.below;
    }
  }

  // Ray energy (source power 1) -> the 1/d^2 scale of the specular stream:
  // intensity captured by a sphere of cross-section pi r^2 from a source of
  // power 4 pi.
  const double scale = 4.0 / (config.receiver_radius * config.receiver_radius);
  Rng polarity(derive_seed(seed, 0x5157A7E5ull));
  std::vector<Arrival> out;
  for (std::size_t n = 0; n < n_bins; ++n) {
    const double sign = polarity.coin() ? 1.0 : -1.0;
    bool any = false;
    for (double e : bins[n]) any |= e > 0.0;
    if (!any) continue;
    Arrival a;
    a.time = static_cast<double>(n) / config.sample_rate;
    for (std::size_t b = 0; b < kNumBands; ++b) a.energy[b] = bins[n][b] * scale;
    a.polarity = sign;
    out.push_back(a);
  }
  return out;
}

std::vector<double> design_band_kernel(std::size_t band, double sample_rate) {
  const std::size_t n = kKernelGrid;
  RealFft fft(n);
  const std::size_t bins = fft.bins();
  // Log magnitude, floored at -200 dB.
  std::vector<std::complex<double>> spectrum(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
    const double mag =
        butterworth_bandpass_magnitude(3, band_lower_edge(band), band_upper_edge(band), f);
    spectrum[k] = std::log(std::max(mag, 1e-10));
  }
  std::vector<double> cepstrum(n);
  fft.inverse(spectrum, cepstrum);
  // Fold onto the causal half.
  for (std::size_t i = 1; i < n / 2; ++i) cepstrum[i] *= 2.0;
  std::fill(cepstrum.begin() + n / 2 + 1, cepstrum.end(), 0.0);
  fft.forward(cepstrum, spectrum);
  for (auto& v : spectrum) v = std::exp(v);
  std::vector<double> h(n);
  fft.inverse(spectrum, h);
  h.resize(kKernelTaps);
  constexpr std::size_t kFade = kKernelTaps / 8;
  for (std::size_t i = 0; i < kFade; ++i) {
    const double x = static_cast<double>(i + 1) / static_cast<double>(kFade);
    h[kKernelTaps - kFade + i] *= 0.5 * (1.0 + std::cos(std::numbers::pi * x));
  }
  return h;
}

const std::array<std::vector<double>, kNumBands>& band_kernels(double sample_rate) {
  static std::mutex mutex;
  static std::map<double, std::array<std::vector<double>, kNumBands>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(sample_rate);
  if (it == cache.end()) {
    std::array<std::vector<double>, kNumBands> kernels;
    for (std::size_t b = 0; b < kNumBands; ++b) kernels[b] = design_band_kernel(b, sample_rate);
    it = cache.emplace(sample_rate, std::move(kernels)).first;
  }
  return it->second;
}

Rir render_rir(const Echogram& echogram, const SimConfig& config) {
  config.validate();
  const auto& kernels = band_kernels(config.sample_rate);
  const std::size_t n_in = window_samples(config);
  std::array<std::vector<double>, kNumBands> amp;
  for (auto& a : amp) a.assign(n_in, 0.0);
  for (const auto* stream : {&echogram.specular, &echogram.diffuse}) {
    for (const Arrival& a : *stream) {
      const auto n = static_cast<std::size_t>(std::llround(a.time * config.sample_rate));
      if (n >= n_in) continue;
      for (std::size_t b = 0; b < kNumBands; ++b) {
        if (a.energy[b] > 0.0) amp[b][n] += a.polarity * std::sqrt(a.energy[b]);
      }
    }
  }

  // Overlap-add convolution, summing bands in the frequency domain.
  constexpr std::size_t kFftSize = 8192;
  constexpr std::size_t kBlock = kFftSize - kKernelTaps + 1;
  RealFft fft(kFftSize);
  std::array<std::vector<std::complex<double>>, kNumBands> kernel_spectra;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    kernel_spectra[b].resize(fft.bins());
    fft.forward(kernels[b], kernel_spectra[b]);
  }
  Rir rir;
  rir.sample_rate = config.sample_rate;
  rir.samples.assign(n_in + kKernelTaps - 1, 0.0);
  std::vector<std::complex<double>> acc(fft.bins()), block_spectrum(fft.bins());
  std::vector<double> block_out(kFftSize);
  for (std::size_t start = 0; start < n_in; start += kBlock) {
    const std::size_t len = std::min(kBlock, n_in - start);
    std::fill(acc.begin(), acc.end(), std::complex<double>{});
    bool any = false;
    for (std::size_t b = 0; b < kNumBands; ++b) {
      const auto seg = std::span<const double>(amp[b]).subspan(start, len);
      if (std::all_of(seg.begin(), seg.end(), [](double v) { return v == 0.0; })) continue;
      any = true;
      fft.forward(seg, block_spectrum);
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += block_spectrum[k] * kernel_spectra[b][k];
    }
    if (!any) continue;
    fft.inverse(acc, block_out);
    const std::size_t out_len = std::min(len + kKernelTaps - 1, rir.samples.size() - start);
    for (std::size_t i = 0; i < out_len; ++i) rir.samples[start + i] += block_out[i];
  }
  return rir;
}

Echogram simulate_echogram(const RoomSpec& spec, const SimConfig& config, std::uint64_t seed) {
  Echogram e;
  e.specular = enumerate_image_sources(spec, config);
  e.diffuse = trace_diffuse_rain(spec, config, seed);
  return e;
}

Rir simulate(const RoomSpec& spec, const SimConfig& config, std::uint64_t seed) {
  return render_rir(simulate_echogram(spec, config, seed), config);
}

void write_echogram(std::ostream& out, const Echogram& echogram) {
  out << "stream,time_s";
  for (double f : kBandCenters) out << ",e" << static_cast<int>(f);
  out << '\n';
  const auto dump = [&](const char* name, const std::vector<Arrival>& arrivals) {
    for (const Arrival& a : arrivals) {
      out << name << ',' << a.time;
      for (double e : a.energy) out << ',' << e;
      out << '\n';
    }
  };
  out.precision(17);
  dump("specular", echogram.specular);
  dump("diffuse", echogram.diffuse);
}

}  // namespace roomabs
