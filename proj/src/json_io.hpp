#pragma once

// nlohmann/json conversions for library types. Internal to the library.

#include <json.hpp>

#include "roomabs/core.hpp"

namespace roomabs {

void to_json(nlohmann::json& j, const BandProfile& p);
void from_json(const nlohmann::json& j, BandProfile& p);
void to_json(nlohmann::json& j, const Vec3& v);
void from_json(const nlohmann::json& j, Vec3& v);
void to_json(nlohmann::json& j, const RoomGeometry& g);
void from_json(const nlohmann::json& j, RoomGeometry& g);
void to_json(nlohmann::json& j, const RoomSpec& spec);
void from_json(const nlohmann::json& j, RoomSpec& spec);

}  // namespace roomabs
