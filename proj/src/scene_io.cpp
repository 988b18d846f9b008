#include "nerp/scene_io.hpp"

#include <fstream>

#include "nerp/errors.hpp"

namespace nerp {
namespace {

using nlohmann::json;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputFault(std::string("scene: '") + what + "' must be 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw InputFault("scene: " + where + " is missing '" + key + "'");
  return j.at(key);
}

}  // namespace

nlohmann::json scene_to_json(const SyntheticScene& scene) {
  json prims = json::array();
  for (const auto& p : scene.primitives) {
    json e = {{"kind", to_string(p.kind)}, {"center", vec_json(p.center)}, {"albedo", vec_json(p.albedo)}};
    if (p.kind == PrimitiveKind::Sphere) {
      e["radius"] = p.radius;
    } else {
      e["half_extents"] = vec_json(p.half_extents);
    }
    prims.push_back(e);
  }
  json cams = json::array();
  for (const auto& sc : scene.cameras) {
    const auto& in = sc.camera.intrinsics;
    const auto& pose = sc.camera.pose;
    json m = json::array();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (r < 3) {
          m.push_back(c < 3 ? pose.rotation(r, c) : pose.translation(r));
        } else {
          m.push_back(c < 3 ? 0.0 : 1.0);
        }
      }
    }
    cams.push_back({{"fx", in.fx},
                    {"fy", in.fy},
                    {"cx", in.cx},
                    {"cy", in.cy},
                    {"width", in.width},
                    {"height", in.height},
                    {"pose", m},
                    {"role", to_string(sc.role)}});
  }
  return {{"primitives", prims},
          {"background", {{"radius", scene.background.radius}, {"albedo", vec_json(scene.background.albedo)}}},
          {"cameras", cams},
          {"roi", {{"min", vec_json(scene.roi.roi_min)}, {"max", vec_json(scene.roi.roi_max)}, {"alpha", scene.roi.alpha}}}};
}

SyntheticScene scene_from_json(const nlohmann::json& j) {
  SyntheticScene scene;
  try {
    for (const auto& e : field(j, "primitives", "scene")) {
      Primitive p;
      const auto kind = field(e, "kind", "primitive").get<std::string>();
      if (kind == "sphere") {
        p.kind = PrimitiveKind::Sphere;
        p.radius = field(e, "radius", "sphere").get<double>();
      } else if (kind == "box") {
        p.kind = PrimitiveKind::Box;
        p.half_extents = vec_from(field(e, "half_extents", "box"), "half_extents");
      } else {
        throw InputFault("scene: unknown primitive kind '" + kind + "'");
      }
      p.center = vec_from(field(e, "center", "primitive"), "center");
      p.albedo = vec_from(field(e, "albedo", "primitive"), "albedo");
      scene.primitives.push_back(p);
    }
    const auto& bg = field(j, "background", "scene");
    scene.background.radius = field(bg, "radius", "background").get<double>();
    scene.background.albedo = vec_from(field(bg, "albedo", "background"), "albedo");
    for (const auto& c : field(j, "cameras", "scene")) {
      SceneCamera sc;
      auto& in = sc.camera.intrinsics;
      in.fx = field(c, "fx", "camera").get<double>();
      in.fy = field(c, "fy", "camera").get<double>();
      in.cx = field(c, "cx", "camera").get<double>();
      in.cy = field(c, "cy", "camera").get<double>();
      in.width = field(c, "width", "camera").get<int>();
      in.height = field(c, "height", "camera").get<int>();
      const auto& m = field(c, "pose", "camera");
      if (!m.is_array() || m.size() != 16) throw InputFault("scene: camera pose must be 16 numbers");
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) sc.camera.pose.rotation(r, k) = m[r * 4 + k].get<double>();
        sc.camera.pose.translation(r) = m[r * 4 + 3].get<double>();
      }
      try {
        sc.role = camera_role_from_string(field(c, "role", "camera").get<std::string>());
      } catch (const std::invalid_argument& err) {
        throw InputFault(std::string("scene: ") + err.what());
      }
      scene.cameras.push_back(sc);
    }
    const auto& roi = field(j, "roi", "scene");
    scene.roi.roi_min = vec_from(field(roi, "min", "roi"), "min");
    scene.roi.roi_max = vec_from(field(roi, "max", "roi"), "max");
    scene.roi.alpha = field(roi, "alpha", "roi").get<double>();
  } catch (const nlohmann::json::exception& err) {
    throw InputFault(std::string("scene: ") + err.what());
  }
  try {
    scene.validate();
  } catch (const std::domain_error& err) {
    throw InputFault(std::string("scene: ") + err.what());
  }
  return scene;
}

void save_scene(const std::string& path, const SyntheticScene& scene) {
  std::ofstream out(path);
  if (!out) throw InputFault("cannot open '" + path + "' for writing");
  out << scene_to_json(scene).dump(2) << "\n";
  if (!out) throw InputFault("write to '" + path + "' failed");
}

SyntheticScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputFault("cannot open scene file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& err) {
    throw InputFault("scene file '" + path + "': " + err.what());
  }
  return scene_from_json(j);
}

}  // namespace nerp
