#include "roomabs/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "roomabs/baselines.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/error.hpp"

namespace roomabs {

namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json envelope_json(const Envelope& e) { return {{"lower", e.lower}, {"upper", e.upper}}; }

Envelope envelope_from(const json& j) {
  Envelope e;
  j.at("lower").get_to(e.lower);
  j.at("upper").get_to(e.upper);
  return e;
}

constexpr std::array<std::string_view, 4> kClassNames = {"reflective", "wall", "floor",
                                                         "ceiling"};

MaterialClass material_class_from(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return static_cast<MaterialClass>(i);
  }
  throw InvalidArgument("unknown material class '" + std::string(name) + "'");
}

}  // namespace

const Envelope& MaterialRanges::envelope(SurfaceClass c) const {
  switch (c) {
    case SurfaceClass::kFloor:
      return floor;
    case SurfaceClass::kCeiling:
      return ceiling;
    default:
      return wall;
  }
}

void MaterialRanges::validate() const {
  if (!(0.0 <= reflective_lo && reflective_lo <= reflective_hi && reflective_hi <= 1.0)) {
    throw InvalidArgument("reflective range must satisfy 0 <= lo <= hi <= 1");
  }
  for (const Envelope* e : {&wall, &floor, &ceiling}) {
    for (std::size_t b = 0; b < kNumBands; ++b) {
      if (!(0.0 <= e->lower[b] && e->lower[b] <= e->upper[b] && e->upper[b] <= 1.0)) {
        throw InvalidArgument("absorption envelope must satisfy 0 <= lower <= upper <= 1");
      }
    }
  }
}

MaterialRanges MaterialRanges::defaults() {
  MaterialRanges r;
  r.wall = {{0.02, 0.03, 0.04, 0.05, 0.05, 0.05}, {0.30, 0.40, 0.45, 0.50, 0.55, 0.60}};
  r.floor = {{0.01, 0.01, 0.02, 0.02, 0.02, 0.02}, {0.10, 0.15, 0.25, 0.30, 0.35, 0.40}};
  r.ceiling = {{0.05, 0.10, 0.10, 0.10, 0.10, 0.10}, {0.50, 0.70, 0.90, 1.00, 1.00, 1.00}};
  return r;
}

MaterialRanges MaterialRanges::load(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_text(path));
    MaterialRanges r;
    const auto& refl = j.at("reflective");
    r.reflective_lo = refl.at(0).get<double>();
    r.reflective_hi = refl.at(1).get<double>();
    r.wall = envelope_from(j.at("wall"));
    r.floor = envelope_from(j.at("floor"));
    r.ceiling = envelope_from(j.at("ceiling"));
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": malformed material ranges: " + e.what());
  }
}

std::string MaterialRanges::to_json() const {
  json j;
  j["reflective"] = {reflective_lo, reflective_hi};
  j["wall"] = envelope_json(wall);
  j["floor"] = envelope_json(floor);
  j["ceiling"] = envelope_json(ceiling);
  return j.dump(2);
}

SamplingStrategy SamplingStrategy::unif() {
  SamplingStrategy s;
  s.kind = StrategyKind::kUnif;
  s.scattering.lower.fill(0.0);
  s.scattering.upper.fill(1.0);
  return s;
}

SamplingStrategy SamplingStrategy::rb(MaterialRanges ranges) {
  ranges.validate();
  SamplingStrategy s;
  s.kind = StrategyKind::kRb;
  s.materials = std::move(ranges);
  s.scattering.lower = {0.0, 0.0, 0.0, 0.2, 0.2, 0.2};
  s.scattering.upper = {0.3, 0.3, 0.3, 1.0, 1.0, 1.0};
  return s;
}

std::string SamplingStrategy::name() const { return kind == StrategyKind::kUnif ? "unif" : "rb"; }

RoomGeometry sample_geometry(Rng& rng, const GeometryRanges& ranges) {
  RoomGeometry g;
  g.lx = rng.uniform(ranges.xy_lo, ranges.xy_hi);
  g.ly = rng.uniform(ranges.xy_lo, ranges.xy_hi);
  g.lz = rng.uniform(ranges.z_lo, ranges.z_hi);
  return g;
}

std::pair<Vec3, Vec3> sample_positions(Rng& rng, const RoomGeometry& geometry,
                                       const PlacementRules& rules) {
  geometry.validate();
  const double m = rules.wall_margin;
  const double wx = geometry.lx - 2.0 * m;
  const double wy = geometry.ly - 2.0 * m;
  const double wz = geometry.lz - 2.0 * m;
  if (wx <= 0.0 || wy <= 0.0 || wz <= 0.0) {
    throw InfeasibleGeometry("no point lies " + std::to_string(m) + " m from every wall");
  }
  if (std::sqrt(wx * wx + wy * wy + wz * wz) < rules.min_separation) {
    throw InfeasibleGeometry("placement box too small for the required separation");
  }
  const auto draw = [&] {
    return Vec3{rng.uniform(m, geometry.lx - m), rng.uniform(m, geometry.ly - m),
                rng.uniform(m, geometry.lz - m)};
  };
  for (std::size_t attempt = 0; attempt < rules.max_attempts; ++attempt) {
    const Vec3 src = draw();
    const Vec3 rcv = draw();
    if (distance(src, rcv) >= rules.min_separation) return {src, rcv};
  }
  throw IterationCapExceeded("no source/receiver pair accepted after " +
                             std::to_string(rules.max_attempts) + " attempts");
}

RoomAcoustics sample_acoustics(Rng& rng, const SamplingStrategy& strategy) {
  RoomAcoustics out{};
  if (strategy.kind == StrategyKind::kUnif) {
    for (auto& s : out) {
      for (double& a : s.absorption.values) a = rng.uniform();
    }
  } else {
    const auto& mat = strategy.materials;
    // One coin per surface class, tossed in the order wall, floor, ceiling.
    const bool wall_reflective = rng.coin();
    const bool floor_reflective = rng.coin();
    const bool ceiling_reflective = rng.coin();
    for (Surface s : kSurfaces) {
      const SurfaceClass cls = surface_class(s);
      const bool reflective = cls == SurfaceClass::kWall    ? wall_reflective
                              : cls == SurfaceClass::kFloor ? floor_reflective
                                                            : ceiling_reflective;
      auto& absorption = out[static_cast<std::size_t>(s)].absorption;
      if (reflective) {
        absorption = BandProfile::flat(rng.uniform(mat.reflective_lo, mat.reflective_hi));
      } else {
        const Envelope& env = mat.envelope(cls);
        for (std::size_t b = 0; b < kNumBands; ++b) {
          absorption[b] = rng.uniform(env.lower[b], env.upper[b]);
        }
      }
    }
  }
  BandProfile scattering;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    scattering[b] = rng.uniform(strategy.scattering.lower[b], strategy.scattering.upper[b]);
  }
  for (auto& s : out) s.scattering = scattering;
  return out;
}

RoomSpec sample_room(Rng& rng, const SamplingStrategy& strategy, const GeometryRanges& ranges) {
  RoomSpec spec;
  spec.geometry = sample_geometry(rng, ranges);
  std::tie(spec.source, spec.receiver) = sample_positions(rng, spec.geometry);
  spec.surfaces = sample_acoustics(rng, strategy);
  return spec;
}

MaterialsTable::MaterialsTable(std::vector<Material> entries) : entries_(std::move(entries)) {
  for (const auto& m : entries_) {
    if (!m.absorption.in_unit_range()) {
      throw InvalidArgument("material '" + m.name + "' has absorption outside [0,1]");
    }
  }
}

MaterialsTable MaterialsTable::defaults() {
  using C = MaterialClass;
  return MaterialsTable({
      {"concrete_painted", C::kReflective, {{0.01, 0.01, 0.01, 0.02, 0.02, 0.02}}},
      {"concrete_rough", C::kReflective, {{0.01, 0.02, 0.04, 0.06, 0.08, 0.10}}},
      {"brick_unglazed", C::kReflective, {{0.03, 0.03, 0.03, 0.04, 0.05, 0.07}}},
      {"brick_painted", C::kReflective, {{0.01, 0.01, 0.02, 0.02, 0.02, 0.03}}},
      {"ceramic_tiles", C::kReflective, {{0.01, 0.01, 0.01, 0.02, 0.02, 0.02}}},
      {"marble", C::kReflective, {{0.01, 0.01, 0.01, 0.01, 0.02, 0.02}}},
      {"plaster_on_masonry", C::kReflective, {{0.01, 0.02, 0.02, 0.03, 0.04, 0.05}}},
      {"terrazzo", C::kReflective, {{0.01, 0.01, 0.02, 0.02, 0.02, 0.02}}},
      {"linoleum_on_concrete", C::kReflective, {{0.02, 0.03, 0.03, 0.03, 0.03, 0.02}}},
      {"parquet_on_concrete", C::kReflective, {{0.04, 0.04, 0.07, 0.06, 0.06, 0.07}}},
      {"plasterboard_on_studs", C::kWall, {{0.29, 0.10, 0.05, 0.04, 0.07, 0.09}}},
      {"wood_panelling", C::kWall, {{0.28, 0.22, 0.17, 0.09, 0.10, 0.11}}},
      {"glazing", C::kWall, {{0.35, 0.25, 0.18, 0.12, 0.07, 0.04}}},
      {"heavy_curtain", C::kWall, {{0.07, 0.31, 0.49, 0.75, 0.70, 0.60}}},
      {"fabric_wall_panel", C::kWall, {{0.10, 0.25, 0.45, 0.55, 0.60, 0.60}}},
      {"perforated_wall_absorber", C::kWall, {{0.20, 0.40, 0.55, 0.50, 0.40, 0.35}}},
      {"cork_tiles", C::kWall, {{0.08, 0.02, 0.08, 0.19, 0.21, 0.22}}},
      {"carpet_thin", C::kFloor, {{0.02, 0.04, 0.08, 0.20, 0.35, 0.40}}},
      {"carpet_on_underlay", C::kFloor, {{0.08, 0.24, 0.57, 0.69, 0.71, 0.73}}},
      {"wood_floor_on_joists", C::kFloor, {{0.15, 0.11, 0.10, 0.07, 0.06, 0.07}}},
      {"rubber_flooring", C::kFloor, {{0.04, 0.04, 0.08, 0.12, 0.10, 0.10}}},
      {"needle_felt", C::kFloor, {{0.02, 0.04, 0.10, 0.20, 0.30, 0.40}}},
      {"mineral_fibre_tiles", C::kCeiling, {{0.45, 0.55, 0.60, 0.90, 0.86, 0.75}}},
      {"suspended_plasterboard", C::kCeiling, {{0.15, 0.10, 0.06, 0.04, 0.04, 0.05}}},
      {"perforated_gypsum", C::kCeiling, {{0.45, 0.70, 0.80, 0.80, 0.65, 0.45}}},
      {"wood_wool_panels", C::kCeiling, {{0.15, 0.30, 0.60, 0.65, 0.70, 0.75}}},
      {"acoustic_plaster", C::kCeiling, {{0.10, 0.20, 0.50, 0.60, 0.70, 0.70}}},
      {"perforated_metal_tiles", C::kCeiling, {{0.50, 0.70, 0.80, 0.85, 0.85, 0.80}}},
  });
}

MaterialsTable MaterialsTable::load(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_text(path));
    std::vector<Material> entries;
    for (const auto& e : j.at("materials")) {
      Material m;
      m.name = e.at("name").get<std::string>();
      m.cls = material_class_from(e.at("class").get<std::string>());
      e.at("absorption").get_to(m.absorption.values);
      entries.push_back(std::move(m));
    }
    return MaterialsTable(std::move(entries));
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": malformed materials table: " + e.what());
  }
}

std::string MaterialsTable::to_json() const {
  json list = json::array();
  for (const auto& m : entries_) {
    list.push_back({{"name", m.name},
                    {"class", kClassNames[static_cast<std::size_t>(m.cls)]},
                    {"absorption", m.absorption.values}});
  }
  return json{{"materials", list}}.dump(2);
}

std::vector<const Material*> MaterialsTable::candidates(SurfaceClass c) const {
  const MaterialClass wanted = c == SurfaceClass::kWall    ? MaterialClass::kWall
                               : c == SurfaceClass::kFloor ? MaterialClass::kFloor
                                                           : MaterialClass::kCeiling;
  std::vector<const Material*> out;
  for (const auto& m : entries_) {
    if (m.cls == wanted || m.cls == MaterialClass::kReflective) out.push_back(&m);
  }
  return out;
}

namespace {
constexpr std::array<std::string_view, 8> kFamilyNames = {
    "realistic", "cube_like",       "flat",           "elongated",
    "rt_constrained", "snr_sweep", "scattering_fixed", "absorption_fixed"};
}

std::string_view family_name(TestFamily f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

TestFamily family_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i) {
    if (kFamilyNames[i] == name) return static_cast<TestFamily>(i);
  }
  throw InvalidArgument("unknown test family '" + std::string(name) + "'");
}

const std::vector<RoomGeometry>& realistic_geometries() {
  static const std::vector<RoomGeometry> g = {
      {4, 5, 3}, {10, 2, 3}, {10, 5, 3}, {5, 8, 2.5}, {10, 10, 5}};
  return g;
}

namespace {

RoomSpec realistic_room(Rng& rng, const MaterialsTable& materials, const SamplingStrategy& rb) {
  RoomSpec spec;
  const auto& geoms = realistic_geometries();
  spec.geometry = geoms[rng.below(geoms.size())];
  std::tie(spec.source, spec.receiver) = sample_positions(rng, spec.geometry);
  // Scattering follows the RB rule; absorption comes from the table.
  spec.surfaces = sample_acoustics(rng, rb);
  for (Surface s : kSurfaces) {
    const auto options = materials.candidates(surface_class(s));
    if (options.empty()) throw InvalidArgument("materials table has no entry for a surface class");
    spec.surface(s).absorption = options[rng.below(options.size())]->absorption;
  }
  return spec;
}

bool rt_in_range(const RoomSpec& spec, const SimConfig& sim, std::uint64_t seed, double lo,
                 double hi) {
  const Rir rir = simulate(spec, sim, seed);
  const auto curves = schroeder_curves(rir);
  for (const auto& curve : curves) {
    try {
      const double rt = estimate_rt(curve, 30.0).rt;
      if (rt < lo || rt > hi) return false;
    } catch (const InsufficientDecay&) {
      return false;
    }
  }
  return true;
}

}  // namespace

TestSet craft_test_set(const TestSetRequest& request, Rng& rng, const SimConfig& sim,
                       const MaterialsTable& materials) {
  const SamplingStrategy rb = SamplingStrategy::rb();
  TestSet set;
  set.family = request.family;
  set.rooms.reserve(request.n);
  const auto with_xy = [&](double x_lo, double x_hi, double y_lo, double y_hi) {
    RoomSpec spec;
    spec.geometry = {rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), 2.5};
    std::tie(spec.source, spec.receiver) = sample_positions(rng, spec.geometry);
    spec.surfaces = sample_acoustics(rng, rb);
    return spec;
  };

  for (std::size_t i = 0; i < request.n; ++i) {
    switch (request.family) {
      case TestFamily::kRealistic:
        set.rooms.push_back(realistic_room(rng, materials, rb));
        break;
      case TestFamily::kCubeLike:
        set.rooms.push_back(with_xy(2, 4, 2, 4));
        break;
      case TestFamily::kFlat:
        set.rooms.push_back(with_xy(8, 10, 8, 10));
        break;
      case TestFamily::kElongated:
        set.rooms.push_back(with_xy(2, 4, 8, 10));
        break;
      case TestFamily::kSnrSweep:
        set.rooms.push_back(sample_room(rng, rb));
        break;
      case TestFamily::kScatteringFixed:
      case TestFamily::kAbsorptionFixed: {
        if (request.value < 0.0 || request.value > 1.0) {
          throw InvalidArgument("fixed coefficient must lie in [0,1]");
        }
        RoomSpec spec = sample_room(rng, rb);
        for (auto& s : spec.surfaces) {
          auto& target =
              request.family == TestFamily::kScatteringFixed ? s.scattering : s.absorption;
          target = BandProfile::flat(request.value);
        }
        set.rooms.push_back(spec);
        break;
      }
      case TestFamily::kRtConstrained: {
        bool accepted = false;
        for (std::size_t attempt = 0; attempt < request.max_attempts_per_room; ++attempt) {
          RoomSpec spec = sample_room(rng, rb);
          if (rt_in_range(spec, sim, rng.next_u64(), request.rt_lo, request.rt_hi)) {
            set.rooms.push_back(spec);
            accepted = true;
            break;
          }
        }
        if (!accepted) {
          throw IterationCapExceeded("no room with RT30 in [" + std::to_string(request.rt_lo) +
                                     ", " + std::to_string(request.rt_hi) + "] s after " +
                                     std::to_string(request.max_attempts_per_room) + " draws");
        }
        break;
      }
    }
  }
  if (request.family == TestFamily::kSnrSweep) set.snr_levels = request.snr_levels;
  return set;
}

}  // namespace roomabs
