#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace roomabs {

inline constexpr std::size_t kNumBands = 6;

// Octave band centers in Hz, 125 Hz to 4 kHz.
inline constexpr std::array<double, kNumBands> kBandCenters = {125.0, 250.0, 500.0,
                                                               1000.0, 2000.0, 4000.0};

using BandValues = std::array<double, kNumBands>;

// One coefficient per octave band (absorption or scattering).
struct BandProfile {
  BandValues values{};

  static BandProfile flat(double level);

  double& operator[](std::size_t band) { return values[band]; }
  double operator[](std::size_t band) const { return values[band]; }

  bool in_unit_range() const;
  bool is_flat() const;
  double mean() const;

  friend bool operator==(const BandProfile&, const BandProfile&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double distance(const Vec3& a, const Vec3& b);

// Surfaces of a shoebox, in serialization order. The room spans
// [0,lx] x [0,ly] x [0,lz]; west is x=0, south is y=0, floor is z=0.
enum class Surface : std::size_t { kFloor = 0, kCeiling, kWest, kSouth, kEast, kNorth };

inline constexpr std::size_t kNumSurfaces = 6;
inline constexpr std::array<Surface, kNumSurfaces> kSurfaces = {
    Surface::kFloor, Surface::kCeiling, Surface::kWest,
    Surface::kSouth, Surface::kEast,    Surface::kNorth};

std::string_view surface_name(Surface s);
Surface surface_from_name(std::string_view name);

// Wall, floor or ceiling: the grouping the sampler uses.
enum class SurfaceClass { kWall, kFloor, kCeiling };
SurfaceClass surface_class(Surface s);

struct RoomGeometry {
  double lx = 0.0;
  double ly = 0.0;
  double lz = 0.0;

  double volume() const { return lx * ly * lz; }
  double surface_area() const { return 2.0 * (lx * ly + lx * lz + ly * lz); }
  double face_area(Surface s) const;
  bool contains(const Vec3& p) const;

  // Throws InvalidArgument unless every dimension is positive and finite.
  void validate() const;

  friend bool operator==(const RoomGeometry&, const RoomGeometry&) = default;
};

struct SurfaceAcoustics {
  BandProfile absorption;
  BandProfile scattering;

  friend bool operator==(const SurfaceAcoustics&, const SurfaceAcoustics&) = default;
};

using RoomAcoustics = std::array<SurfaceAcoustics, kNumSurfaces>;

// Everything one simulation needs.
struct RoomSpec {
  RoomGeometry geometry;
  RoomAcoustics surfaces{};
  Vec3 source;
  Vec3 receiver;

  const SurfaceAcoustics& surface(Surface s) const {
    return surfaces[static_cast<std::size_t>(s)];
  }
  SurfaceAcoustics& surface(Surface s) { return surfaces[static_cast<std::size_t>(s)]; }

  // Throws InvalidArgument on bad geometry, out-of-range coefficients or
  // positions that are not strictly inside the box.
  void validate() const;

  friend bool operator==(const RoomSpec&, const RoomSpec&) = default;
};

struct AbsorptionLabel {
  BandValues alpha_bar{};
  std::optional<BandValues> s_bar;
};

// Area-weighted mean of the six surface absorptions, per band.
AbsorptionLabel mean_absorption(const RoomSpec& spec);

// Area-weighted mean scattering, per band.
BandValues mean_scattering(const RoomSpec& spec);

// RoomSpec <-> JSON text.
std::string room_spec_to_json(const RoomSpec& spec);
RoomSpec room_spec_from_json(const std::string& text);

}  // namespace roomabs
