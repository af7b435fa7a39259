#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "roomabs/error.hpp"
#include "roomabs/sampler.hpp"

using namespace roomabs;

TEST_SUITE("sampler") {

TEST_CASE("geometry draws stay in range and repeat per seed") {
  Rng a(11), b(11);
  double sum_lz = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto g = sample_geometry(a);
    CHECK(g == sample_geometry(b));
    REQUIRE(g.lx >= 1.5);
    REQUIRE(g.lx <= 10.0);
    REQUIRE(g.ly >= 1.5);
    REQUIRE(g.ly <= 10.0);
    REQUIRE(g.lz >= 2.5);
    REQUIRE(g.lz <= 4.0);
    sum_lz += g.lz;
  }
  CHECK(std::abs(sum_lz / n - 3.25) < 0.02);
}

TEST_CASE("positions respect wall margin and separation") {
  Rng rng(5);
  const RoomGeometry g{4, 5, 3};
  for (int i = 0; i < 2000; ++i) {
    const auto [s, r] = sample_positions(rng, g);
    for (const Vec3& p : {s, r}) {
      REQUIRE(p.x >= 0.5);
      REQUIRE(p.x <= 3.5);
      REQUIRE(p.y >= 0.5);
      REQUIRE(p.y <= 4.5);
      REQUIRE(p.z >= 0.5);
      REQUIRE(p.z <= 2.5);
    }
    REQUIRE(distance(s, r) >= 1.0);
  }
}

TEST_CASE("tight but feasible room still places a pair") {
  // Margin box 0.8 x 0.8 x 1.6, diagonal about 1.96 m.
  Rng rng(9);
  const auto [s, r] = sample_positions(rng, {1.8, 1.8, 2.6});
  CHECK(distance(s, r) >= 1.0);
}

TEST_CASE("empty margin region is infeasible") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_positions(rng, {1.0, 5, 3}), InfeasibleGeometry);
  // Box exists but is too small for a 1 m separation.
  CHECK_THROWS_AS(sample_positions(rng, {1.4, 1.4, 1.4}), InfeasibleGeometry);
}

TEST_CASE("reflectivity-biased acoustics") {
  const auto rb = SamplingStrategy::rb();
  const auto& m = rb.materials;
  Rng rng(3);
  int flat_walls = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto ac = sample_acoustics(rng, rb);
    // Scattering shared by all surfaces, low bands [0,0.3], high bands [0.2,1].
    for (const auto& s : ac) CHECK(s.scattering == ac[0].scattering);
    for (std::size_t b = 0; b < 3; ++b) {
      REQUIRE(ac[0].scattering[b] >= 0.0);
      REQUIRE(ac[0].scattering[b] <= 0.3);
    }
    for (std::size_t b = 3; b < 6; ++b) {
      REQUIRE(ac[0].scattering[b] >= 0.2);
      REQUIRE(ac[0].scattering[b] <= 1.0);
    }
    // Class coins: the four walls are either all flat reflective or all enveloped.
    const bool walls_flat = ac[static_cast<std::size_t>(Surface::kWest)].absorption.is_flat();
    flat_walls += walls_flat;
    for (Surface s : kSurfaces) {
      const auto& a = ac[static_cast<std::size_t>(s)].absorption;
      const auto cls = surface_class(s);
      if (cls == SurfaceClass::kWall && walls_flat) {
        REQUIRE(a.is_flat());
        REQUIRE(a[0] >= m.reflective_lo);
        REQUIRE(a[0] <= m.reflective_hi);
      } else if (!a.is_flat()) {
        const auto& env = m.envelope(cls);
        for (std::size_t b = 0; b < kNumBands; ++b) {
          REQUIRE(a[b] >= env.lower[b]);
          REQUIRE(a[b] <= env.upper[b]);
        }
      }
    }
  }
  // Fair coin.
  CHECK(std::abs(flat_walls / double(n) - 0.5) < 0.04);
}

TEST_CASE("uniform acoustics cover [0,1]") {
  Rng rng(8);
  double sum = 0;
  std::size_t count = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto ac = sample_acoustics(rng, SamplingStrategy::unif());
    for (const auto& s : ac) {
      REQUIRE(s.absorption.in_unit_range());
      REQUIRE(s.scattering.in_unit_range());
      for (double a : s.absorption.values) sum += a, ++count;
    }
  }
  CHECK(std::abs(sum / count - 0.5) < 0.01);
}

TEST_CASE("sample_room is deterministic and valid") {
  Rng a(42), b(42);
  for (int i = 0; i < 200; ++i) {
    const auto ra = sample_room(a, SamplingStrategy::rb());
    CHECK(ra == sample_room(b, SamplingStrategy::rb()));
    CHECK_NOTHROW(ra.validate());
  }
}

TEST_CASE("crafted test sets follow their family rules") {
  Rng rng(4);
  const auto sim = SimConfig::fast();
  TestSetRequest req;
  req.n = 60;

  req.family = TestFamily::kRealistic;
  const auto realistic = craft_test_set(req, rng, sim);
  REQUIRE(realistic.rooms.size() == 60);
  const auto& geoms = realistic_geometries();
  std::set<std::size_t> seen;
  for (const auto& r : realistic.rooms) {
    const auto it = std::find(geoms.begin(), geoms.end(), r.geometry);
    REQUIRE(it != geoms.end());
    seen.insert(static_cast<std::size_t>(it - geoms.begin()));
    // Absorption profiles come from the table for the surface class.
    const auto table = MaterialsTable::defaults();
    for (Surface s : kSurfaces) {
      bool found = false;
      for (const auto* mat : table.candidates(surface_class(s))) {
        found = found || mat->absorption == r.surface(s).absorption;
      }
      REQUIRE(found);
    }
  }
  CHECK(seen.size() == 5);

  req.family = TestFamily::kCubeLike;
  for (const auto& r : craft_test_set(req, rng, sim).rooms) {
    REQUIRE(r.geometry.lx >= 2.0);
    REQUIRE(r.geometry.lx <= 4.0);
    REQUIRE(r.geometry.ly >= 2.0);
    REQUIRE(r.geometry.ly <= 4.0);
    REQUIRE(r.geometry.lz == 2.5);
  }

  req.family = TestFamily::kFlat;
  for (const auto& r : craft_test_set(req, rng, sim).rooms) {
    REQUIRE(r.geometry.lx >= 8.0);
    REQUIRE(r.geometry.ly >= 8.0);
    REQUIRE(r.geometry.lz == 2.5);
  }

  req.family = TestFamily::kElongated;
  for (const auto& r : craft_test_set(req, rng, sim).rooms) {
    const double lo = std::min(r.geometry.lx, r.geometry.ly);
    const double hi = std::max(r.geometry.lx, r.geometry.ly);
    REQUIRE(lo <= 4.0);
    REQUIRE(hi >= 8.0);
  }

  req.family = TestFamily::kAbsorptionFixed;
  req.value = 0.3;
  for (const auto& r : craft_test_set(req, rng, sim).rooms) {
    for (double a : mean_absorption(r).alpha_bar) REQUIRE(a == doctest::Approx(0.3));
  }

  req.family = TestFamily::kScatteringFixed;
  req.value = 0.7;
  for (const auto& r : craft_test_set(req, rng, sim).rooms) {
    for (double s : mean_scattering(r)) REQUIRE(s == doctest::Approx(0.7));
  }

  req.family = TestFamily::kSnrSweep;
  const auto sweep = craft_test_set(req, rng, sim);
  CHECK(sweep.snr_levels == req.snr_levels);
}

TEST_CASE("family names round trip") {
  for (auto f : {TestFamily::kRealistic, TestFamily::kCubeLike, TestFamily::kFlat,
                 TestFamily::kElongated, TestFamily::kRtConstrained, TestFamily::kSnrSweep,
                 TestFamily::kScatteringFixed, TestFamily::kAbsorptionFixed}) {
    CHECK(family_from_name(family_name(f)) == f);
  }
  CHECK_THROWS_AS(family_from_name("cathedral"), InvalidArgument);
}

TEST_CASE("shipped data files match the built-in tables") {
  const std::string dir = ROOMABS_DATA_DIR;
  CHECK(MaterialRanges::load(dir + "/material_ranges.json").to_json() ==
        MaterialRanges::defaults().to_json());
  CHECK(MaterialsTable::load(dir + "/materials.json").to_json() ==
        MaterialsTable::defaults().to_json());
}

TEST_CASE("malformed ranges are rejected") {
  auto r = MaterialRanges::defaults();
  r.wall.lower[2] = 0.9;  // above its upper bound
  CHECK_THROWS_AS(r.validate(), InvalidArgument);
}

}
