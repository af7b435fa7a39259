#include "roomabs/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_io.hpp"
#include "roomabs/error.hpp"

namespace roomabs {

BandProfile BandProfile::flat(double level) {
  BandProfile p;
  p.values.fill(level);
  return p;
}

bool BandProfile::in_unit_range() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

bool BandProfile::is_flat() const {
  return std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
}

double BandProfile::mean() const {
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(kNumBands);
}

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

namespace {
constexpr std::array<std::string_view, kNumSurfaces> kSurfaceNames = {
    "floor", "ceiling", "west", "south", "east", "north"};
}

std::string_view surface_name(Surface s) { return kSurfaceNames[static_cast<std::size_t>(s)]; }

Surface surface_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumSurfaces; ++i) {
    if (kSurfaceNames[i] == name) return kSurfaces[i];
  }
  throw InvalidArgument("unknown surface name '" + std::string(name) + "'");
}

SurfaceClass surface_class(Surface s) {
  switch (s) {
    case Surface::kFloor:
      return SurfaceClass::kFloor;
    case Surface::kCeiling:
      return SurfaceClass::kCeiling;
    default:
      return SurfaceClass::kWall;
  }
}

double RoomGeometry::face_area(Surface s) const {
  switch (s) {
    case Surface::kFloor:
    case Surface::kCeiling:
      return lx * ly;
    case Surface::kWest:
    case Surface::kEast:
      return ly * lz;
    case Surface::kSouth:
    case Surface::kNorth:
      return lx * lz;
  }
  return 0.0;
}

bool RoomGeometry::contains(const Vec3& p) const {
  return p.x > 0.0 && p.x < lx && p.y > 0.0 && p.y < ly && p.z > 0.0 && p.z < lz;
}

void RoomGeometry::validate() const {
  for (double d : {lx, ly, lz}) {
    if (!std::isfinite(d) || d <= 0.0) {
      throw InvalidArgument("room dimensions must be positive and finite");
    }
  }
}

void RoomSpec::validate() const {
  geometry.validate();
  for (Surface s : kSurfaces) {
    const auto& acoustics = surface(s);
    if (!acoustics.absorption.in_unit_range() || !acoustics.scattering.in_unit_range()) {
      throw InvalidArgument("coefficients of surface '" + std::string(surface_name(s)) +
                            "' leave [0,1]");
    }
  }
  if (!geometry.contains(source)) throw InvalidArgument("source is not inside the room");
  if (!geometry.contains(receiver)) throw InvalidArgument("receiver is not inside the room");
}

AbsorptionLabel mean_absorption(const RoomSpec& spec) {
  AbsorptionLabel label;
  const double total = spec.geometry.surface_area();
  for (std::size_t b = 0; b < kNumBands; ++b) {
    double weighted = 0.0;
    for (Surface s : kSurfaces) {
      weighted += spec.surface(s).absorption[b] * spec.geometry.face_area(s);
    }
    label.alpha_bar[b] = weighted / total;
  }
  return label;
}

BandValues mean_scattering(const RoomSpec& spec) {
  BandValues out{};
  const double total = spec.geometry.surface_area();
  for (std::size_t b = 0; b < kNumBands; ++b) {
    double weighted = 0.0;
    for (Surface s : kSurfaces) {
      weighted += spec.surface(s).scattering[b] * spec.geometry.face_area(s);
    }
    out[b] = weighted / total;
  }
  return out;
}

void to_json(nlohmann::json& j, const BandProfile& p) { j = p.values; }
void from_json(const nlohmann::json& j, BandProfile& p) { j.get_to(p.values); }

void to_json(nlohmann::json& j, const Vec3& v) { j = {v.x, v.y, v.z}; }
void from_json(const nlohmann::json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("position must have 3 entries");
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(nlohmann::json& j, const RoomGeometry& g) { j = {g.lx, g.ly, g.lz}; }
void from_json(const nlohmann::json& j, RoomGeometry& g) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("dimensions must have 3 entries");
  g = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(nlohmann::json& j, const RoomSpec& spec) {
  j = nlohmann::json::object();
  j["dimensions"] = spec.geometry;
  j["source"] = spec.source;
  j["receiver"] = spec.receiver;
  auto surfaces = nlohmann::json::array();
  for (Surface s : kSurfaces) {
    surfaces.push_back({{"name", surface_name(s)},
                        {"absorption", spec.surface(s).absorption},
                        {"scattering", spec.surface(s).scattering}});
  }
  j["surfaces"] = std::move(surfaces);
}

void from_json(const nlohmann::json& j, RoomSpec& spec) {
  spec.geometry = j.at("dimensions").get<RoomGeometry>();
  spec.source = j.at("source").get<Vec3>();
  spec.receiver = j.at("receiver").get<Vec3>();
  const auto& surfaces = j.at("surfaces");
  if (surfaces.size() != kNumSurfaces) throw InvalidArgument("expected 6 surfaces");
  for (const auto& entry : surfaces) {
    auto& acoustics = spec.surface(surface_from_name(entry.at("name").get<std::string>()));
    acoustics.absorption = entry.at("absorption").get<BandProfile>();
    acoustics.scattering = entry.at("scattering").get<BandProfile>();
  }
}

std::string room_spec_to_json(const RoomSpec& spec) {
  return nlohmann::json(spec).dump(2);
}

RoomSpec room_spec_from_json(const std::string& text) {
  try {
    auto spec = nlohmann::json::parse(text).get<RoomSpec>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed room spec: ") + e.what());
  }
}

}  // namespace roomabs
