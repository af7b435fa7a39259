#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "roomabs/baselines.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/error.hpp"
#include "roomabs/simulator.hpp"
#include "oracles.hpp"

using namespace roomabs;
using oracle::iso_db_per_m;
using oracle::mirror_images;

namespace {

RoomSpec test_room(double alpha = 0.2, double scatter = 0.3) {
  RoomSpec r;
  r.geometry = {4.0, 5.0, 3.0};
  r.source = {1.0, 1.5, 1.2};
  r.receiver = {3.0, 3.5, 1.6};
  for (std::size_t i = 0; i < kNumSurfaces; ++i) {
    BandProfile a;
    for (std::size_t b = 0; b < kNumBands; ++b) a[b] = std::min(1.0, alpha + 0.01 * i + 0.02 * b);
    r.surfaces[i] = {a, BandProfile::flat(scatter)};
  }
  return r;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("air absorption matches an independent ISO 9613-1 evaluation") {
  AirConditions air;
  for (double f : kBandCenters) {
    const double db = iso_db_per_m(f, 20, 42, 101.325);
    // Energy after d metres: 10^(-db*d/10).
    CHECK(air_attenuation(f, 37.0, air) == doctest::Approx(std::pow(10.0, -db * 37.0 / 10)).epsilon(1e-12));
  }
  // Rough magnitude at 4 kHz: a few tens of dB per km.
  const double db4k = iso_db_per_m(4000, 20, 42, 101.325) * 1000;
  CHECK(db4k > 20);
  CHECK(db4k < 40);
  air.enabled = false;
  CHECK(air_attenuation(4000, 100, air) == 1.0);
}

TEST_CASE("image sources match brute-force mirroring up to order 3") {
  const auto room = test_room();
  SimConfig cfg;
  cfg.max_time = 2.0;  // wide enough that only the order bound prunes
  for (int order = 0; order <= 3; ++order) {
    cfg.max_image_order = order;
    const auto arrivals = enumerate_image_sources(room, cfg);
    auto images = mirror_images(room, order);
    REQUIRE(arrivals.size() == images.size());
    // Equidistant images make time order ambiguous, so match each image to an
    // unused arrival with the same time and energies.
    std::vector<bool> used(arrivals.size(), false);
    for (const auto& img : images) {
      const double d = distance(img.pos, room.receiver);
      const BandValues e = oracle::image_energy(room, img);
      bool matched = false;
      for (std::size_t i = 0; i < arrivals.size() && !matched; ++i) {
        if (used[i] || std::abs(arrivals[i].time - d / 343.0) > 1e-12 * d) continue;
        bool same = true;
        for (std::size_t b = 0; b < kNumBands; ++b) {
          same = same && std::abs(arrivals[i].energy[b] - e[b]) <= 1e-12 * e[b];
        }
        if (same) used[i] = matched = true;
      }
      CHECK(matched);
    }
  }
  // Images of exactly order 1, 2, 3 number 6, 18, 38.
  std::map<int, int> per_order;
  for (const auto& img : mirror_images(room, 3)) per_order[img.order]++;
  CHECK(per_order[1] == 6);
  CHECK(per_order[2] == 18);
  CHECK(per_order[3] == 38);
}

TEST_CASE("image source edge cases") {
  SimConfig cfg;
  cfg.max_image_order = 0;
  auto arrivals = enumerate_image_sources(test_room(), cfg);
  REQUIRE(arrivals.size() == 1);
  CHECK(arrivals[0].time == doctest::Approx(distance(test_room().source, test_room().receiver) / 343));
  cfg.max_image_order = 1;
  CHECK(enumerate_image_sources(test_room(), cfg).size() == 7);

  cfg.max_image_order = 5;
  arrivals = enumerate_image_sources(test_room(1.0, 0.0), cfg);
  for (std::size_t i = 1; i < arrivals.size(); ++i) {
    for (double e : arrivals[i].energy) CHECK(e == 0.0);
  }
  for (double e : arrivals[0].energy) CHECK(e > 0.0);
}

TEST_CASE("order bound does not matter once the time window binds") {
  SimConfig a, b;
  a.max_time = b.max_time = 0.05;
  a.max_image_order = 50;
  b.max_image_order = kUnboundedOrder;
  const auto x = enumerate_image_sources(test_room(), a);
  const auto y = enumerate_image_sources(test_room(), b);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].time == y[i].time);
    CHECK(x[i].energy == y[i].energy);
  }
}

TEST_CASE("diffuse rain degenerate cases") {
  SimConfig cfg = SimConfig::fast();
  cfg.n_rays = 2000;
  CHECK(trace_diffuse_rain(test_room(0.2, 0.0), cfg, 1).empty());
  CHECK(trace_diffuse_rain(test_room(1.0, 0.5), cfg, 1).empty());
  cfg.diffuse = false;
  CHECK(trace_diffuse_rain(test_room(), cfg, 1).empty());
}

TEST_CASE("diffuse rain is deterministic and polarities are signs") {
  SimConfig cfg;
  cfg.n_rays = 3000;
  const auto a = trace_diffuse_rain(test_room(), cfg, 9);
  const auto b = trace_diffuse_rain(test_room(), cfg, 9);
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].time == b[i].time);
    CHECK(a[i].energy == b[i].energy);
    CHECK(std::abs(a[i].polarity) == 1.0);
  }
  const auto c = trace_diffuse_rain(test_room(), cfg, 10);
  bool differs = c.size() != a.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].energy != c[i].energy;
  CHECK(differs);
}

TEST_CASE("diffuse rain conserves energy") {
  auto room = test_room();
  for (auto& surf : room.surfaces) surf = {BandProfile::flat(0.0), BandProfile::flat(0.4)};
  SimConfig cfg;
  cfg.n_rays = 500;
  cfg.max_time = 0.3;
  cfg.air.enabled = false;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TraceLedger ledger;
    trace_diffuse_rain(room, cfg, seed, &ledger);
    const auto total = ledger.accounted();
    for (std::size_t b = 0; b < kNumBands; ++b) {
      CHECK(ledger.emitted[b] == doctest::Approx(1.0));
      CHECK(ledger.absorbed[b] == 0.0);
      CHECK(ledger.air[b] == 0.0);
      CHECK(total[b] == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  // With absorption and air the buckets still close.
  cfg.air.enabled = true;
  TraceLedger ledger;
  trace_diffuse_rain(test_room(), cfg, 3, &ledger);
  for (std::size_t b = 0; b < kNumBands; ++b) {
    CHECK(ledger.accounted()[b] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ledger.absorbed[b] > 0.0);
    CHECK(ledger.air[b] > 0.0);
  }
}

TEST_CASE("band kernels") {
  for (std::size_t b = 0; b < kNumBands; ++b) {
    const auto& h = band_kernels(48000)[b];
    CHECK(h.size() == kKernelTaps);
    // Unit gain at the band centre.
    double re = 0, im = 0;
    for (std::size_t n = 0; n < h.size(); ++n) {
      const double w = 2 * std::numbers::pi * kBandCenters[b] * n / 48000;
      re += h[n] * std::cos(w);
      im -= h[n] * std::sin(w);
    }
    CHECK(std::hypot(re, im) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("rendering") {
  SimConfig cfg;
  cfg.max_time = 0.1;
  const auto empty = render_rir({}, cfg);
  for (double v : empty.samples) CHECK(v == 0.0);

  Echogram one;
  Arrival a;
  a.time = 100 / 48000.0;
  a.energy = {0, 0, 0, 4.0, 0, 0};
  one.specular.push_back(a);
  const auto r = render_rir(one, cfg);
  const auto& k = band_kernels(48000)[3];
  for (std::size_t n = 0; n < r.samples.size(); ++n) {
    const double expected = n >= 100 && n - 100 < k.size() ? 2.0 * k[n - 100] : 0.0;
    REQUIRE(std::abs(r.samples[n] - expected) < 1e-12);
  }

  // Linear in the amplitude sequences.
  Echogram two = one;
  Arrival b;
  b.time = 0.02;
  b.energy = {1, 1, 1, 1, 1, 1};
  b.polarity = -1;
  two.diffuse.push_back(b);
  Echogram only_b;
  only_b.diffuse.push_back(b);
  const auto r2 = render_rir(two, cfg);
  const auto rb = render_rir(only_b, cfg);
  for (std::size_t n = 0; n < r2.samples.size(); ++n) {
    REQUIRE(std::abs(r2.samples[n] - r.samples[n] - rb.samples[n]) < 1e-12);
  }
}

TEST_CASE("scaling energies by c^2 scales the waveform by c") {
  SimConfig cfg = SimConfig::fast();
  cfg.max_time = 0.1;
  auto e = simulate_echogram(test_room(), cfg, 4);
  const auto base = render_rir(e, cfg);
  const double c = 3.0;
  for (auto* list : {&e.specular, &e.diffuse})
    for (auto& a : *list)
      for (auto& x : a.energy) x *= c * c;
  const auto scaled = render_rir(e, cfg);
  REQUIRE(scaled.samples.size() == base.samples.size());
  for (std::size_t n = 0; n < base.samples.size(); ++n)
    REQUIRE(std::abs(scaled.samples[n] - c * base.samples[n]) < 1e-9);
}

TEST_CASE("nothing arrives before the direct sound") {
  SimConfig cfg = SimConfig::fast();
  cfg.max_time = 0.1;
  const auto room = test_room();
  const auto rir = simulate(room, cfg, 8);
  const double d = std::hypot(room.source.x - room.receiver.x, room.source.y - room.receiver.y,
                              room.source.z - room.receiver.z);
  const auto first = static_cast<std::size_t>(std::lround(d / cfg.speed_of_sound * 48000));
  double peak = 0;
  for (double v : rir.samples) peak = std::max(peak, std::abs(v));
  // FFT round-off only.
  for (std::size_t n = 0; n < first; ++n) REQUIRE(std::abs(rir.samples[n]) < 1e-12 * peak);
  CHECK(std::abs(rir.samples[first]) > 1e-3 * peak);
}

TEST_CASE("doubling the ray count halves the tail variance") {
  SimConfig cfg;
  cfg.max_time = 0.06;
  cfg.air.enabled = false;
  const auto room = test_room(0.1, 0.6);
  auto variance = [&](std::size_t rays) {
    cfg.n_rays = rays;
    std::array<double, kNumBands> sum{}, sq{};
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
      std::array<double, kNumBands> w{};
      for (const auto& a : trace_diffuse_rain(room, cfg, 100 + seed))
        if (a.time >= 0.04 && a.time < 0.05)
          for (std::size_t b = 0; b < kNumBands; ++b) w[b] += a.energy[b];
      for (std::size_t b = 0; b < kNumBands; ++b) {
        sum[b] += w[b];
        sq[b] += w[b] * w[b];
      }
    }
    std::array<double, kNumBands> v{};
    for (std::size_t b = 0; b < kNumBands; ++b)
      v[b] = sq[b] / seeds - (sum[b] / seeds) * (sum[b] / seeds);
    return v;
  };
  const auto v1 = variance(1000), v2 = variance(2000);
  // Bands share ray paths, so average the per-band ratios once.
  double ratio = 0;
  for (std::size_t b = 0; b < kNumBands; ++b) ratio += v1[b] / v2[b] / kNumBands;
  MESSAGE("variance ratio " << ratio);
  CHECK(ratio > 1.3);
  CHECK(ratio < 3.0);
}

TEST_CASE("simulate is deterministic") {
  SimConfig cfg = SimConfig::fast();
  cfg.max_time = 0.2;
  const auto a = simulate(test_room(), cfg, 5);
  const auto b = simulate(test_room(), cfg, 5);
  CHECK(a.samples == b.samples);
  CHECK(a.sample_rate == 48000);
}

TEST_CASE("fully absorbing, non-scattering room is just the direct sound") {
  SimConfig cfg = SimConfig::fast();
  cfg.max_time = 0.1;
  const auto room = test_room(1.0, 0.0);
  const auto e = simulate_echogram(room, cfg, 1);
  CHECK(e.diffuse.empty());
  std::size_t nonzero = 0;
  for (const auto& a : e.specular) nonzero += a.energy[0] > 0.0;
  CHECK(nonzero == 1);
}

TEST_CASE("simulated decay is close to the Eyring prediction") {
  RoomSpec room;
  room.geometry = {5.0, 5.5, 4.5};
  room.source = {1.3, 1.7, 1.5};
  room.receiver = {3.6, 3.9, 2.4};
  for (auto& s : room.surfaces) s = {BandProfile::flat(0.15), BandProfile::flat(0.6)};
  SimConfig cfg = SimConfig::fast();
  cfg.max_time = 1.5;
  cfg.air.enabled = false;
  const auto rir = simulate(room, cfg, 11);
  const double v = room.geometry.volume(), s = room.geometry.surface_area();
  const double predicted = 0.163 * v / (-s * std::log(1 - 0.15));
  const auto curves = schroeder_curves(rir);
  for (std::size_t b = 1; b < kNumBands; ++b) {
    const double rt = estimate_rt(curves[b], 20).rt;
    CHECK(rt == doctest::Approx(predicted).epsilon(0.2));
  }
}

TEST_CASE("configuration checks") {
  SimConfig cfg;
  cfg.max_time = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  CHECK(SimConfig::paper().n_rays == 50000);
  CHECK(SimConfig::fast().n_rays == 10000);
  auto room = test_room();
  room.receiver = room.source;
  CHECK_THROWS_AS(enumerate_image_sources(room, SimConfig{}), InvalidArgument);
}

}
