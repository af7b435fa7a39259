#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "roomabs/core.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/random.hpp"
#include "roomabs/simulator.hpp"

namespace roomabs {

struct Envelope {
  BandValues lower{};
  BandValues upper{};
};

// Absorption ranges for reflectivity-biased sampling.
struct MaterialRanges {
  double reflective_lo = 0.01;
  double reflective_hi = 0.12;
  Envelope wall;
  Envelope floor;
  Envelope ceiling;

  const Envelope& envelope(SurfaceClass c) const;
  // Throws InvalidArgument unless 0 <= lower <= upper <= 1 everywhere.
  void validate() const;

  static MaterialRanges defaults();
  static MaterialRanges load(const std::filesystem::path& path);
  std::string to_json() const;
};

enum class StrategyKind { kUnif, kRb };

struct SamplingStrategy {
  StrategyKind kind = StrategyKind::kRb;
  MaterialRanges materials;  // RB only
  Envelope scattering;       // per-band [lower, upper]

  static SamplingStrategy unif();
  static SamplingStrategy rb(MaterialRanges ranges = MaterialRanges::defaults());
  std::string name() const;
};

struct GeometryRanges {
  double xy_lo = 1.5, xy_hi = 10.0;
  double z_lo = 2.5, z_hi = 4.0;
};

RoomGeometry sample_geometry(Rng& rng, const GeometryRanges& ranges = {});

struct PlacementRules {
  double wall_margin = 0.5;
  double min_separation = 1.0;
  std::size_t max_attempts = 10000;
};

// Rejection sampling of a (source, receiver) pair. Throws InfeasibleGeometry
// when the margin box is empty or too small for the separation, and
// IterationCapExceeded when no pair is accepted within max_attempts.
std::pair<Vec3, Vec3> sample_positions(Rng& rng, const RoomGeometry& geometry,
                                       const PlacementRules& rules = {});

RoomAcoustics sample_acoustics(Rng& rng, const SamplingStrategy& strategy);

// Geometry, positions and acoustics in that order.
RoomSpec sample_room(Rng& rng, const SamplingStrategy& strategy,
                     const GeometryRanges& ranges = {});

enum class MaterialClass { kReflective, kWall, kFloor, kCeiling };

struct Material {
  std::string name;
  MaterialClass cls = MaterialClass::kWall;
  BandProfile absorption;
};

// Named absorption profiles for the realistic test set.
class MaterialsTable {
 public:
  MaterialsTable() = default;
  explicit MaterialsTable(std::vector<Material> entries);

  static MaterialsTable defaults();
  static MaterialsTable load(const std::filesystem::path& path);
  std::string to_json() const;

  const std::vector<Material>& entries() const { return entries_; }
  // Materials usable on a surface of the given class: that class plus the
  // reflective class.
  std::vector<const Material*> candidates(SurfaceClass c) const;

 private:
  std::vector<Material> entries_;
};

enum class TestFamily {
  kRealistic,
  kCubeLike,
  kFlat,
  kElongated,
  kRtConstrained,
  kSnrSweep,
  kScatteringFixed,
  kAbsorptionFixed,
};

std::string_view family_name(TestFamily f);
TestFamily family_from_name(std::string_view name);

struct TestSetRequest {
  TestFamily family = TestFamily::kRealistic;
  std::size_t n = 100;
  double value = 0.0;                  // fixed coefficient for *_fixed families
  double rt_lo = 0.3, rt_hi = 0.8;     // rt_constrained range, seconds
  std::vector<double> snr_levels = {10.0, 20.0, 30.0, 40.0, 50.0, kNoNoise};
  std::size_t max_attempts_per_room = 200;  // rt_constrained rejection cap

};

struct TestSet {
  TestFamily family = TestFamily::kRealistic;
  std::vector<RoomSpec> rooms;
  std::vector<double> snr_levels;  // snr_sweep only
};

// The five fixed geometries of the realistic set.
const std::vector<RoomGeometry>& realistic_geometries();

// Default reverberation classes for rt_constrained: slightly, semi, fully
// reverberant.
inline constexpr std::array<std::pair<double, double>, 3> kRtClasses = {
    std::pair{0.1, 0.3}, std::pair{0.3, 0.8}, std::pair{0.8, 2.0}};

TestSet craft_test_set(const TestSetRequest& request, Rng& rng, const SimConfig& sim,
                       const MaterialsTable& materials = MaterialsTable::defaults());

}  // namespace roomabs
