#pragma once

#include <string>

#include <json.hpp>

#include "nerp/synthkit.hpp"

namespace nerp {

// Scene schema:
//   {primitives: [{kind, center, radius | half_extents, albedo}],
//    background: {radius, albedo},
//    cameras: [{fx, fy, cx, cy, width, height, pose: 16 row-major camera-to-world reals, role}],
//    roi: {min, max, alpha}}
nlohmann::json scene_to_json(const SyntheticScene& scene);
SyntheticScene scene_from_json(const nlohmann::json& j);

void save_scene(const std::string& path, const SyntheticScene& scene);
SyntheticScene load_scene(const std::string& path);

}  // namespace nerp
