#pragma once

#include <span>
#include <string>
#include <vector>

#include "nerp/geometry.hpp"
#include "nerp/image.hpp"
#include "nerp/radiance.hpp"
#include "nerp/sampling.hpp"

namespace nerp {

enum class PrimitiveKind { Sphere, Box };
enum class CameraRole { Train, Heldout, Source };

std::string to_string(PrimitiveKind kind);
std::string to_string(CameraRole role);
CameraRole camera_role_from_string(const std::string& name);

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;                  // spheres
  Vec3 half_extents = Vec3::Constant(1.0);  // boxes
  Color albedo = Color::Constant(0.5);
};

// Enclosing sphere seen from the inside; its SDF is radius - |x - center|.
struct Background {
  Vec3 center = Vec3::Zero();
  double radius = 7.0;
  Color albedo = Color::Constant(0.5);
};

struct SceneCamera {
  Camera camera;
  CameraRole role = CameraRole::Train;
};

struct SyntheticScene {
  std::vector<Primitive> primitives;
  Background background;
  std::vector<SceneCamera> cameras;
  ContractionConfig roi;

  // Throws std::domain_error when a scene invariant is violated.
  void validate() const;
  std::vector<Camera> cameras_with_role(CameraRole role) const;
  double diameter() const { return 2.0 * background.radius; }
  // Every ray from a camera inside the shell hits it within one diameter.
  RayRange ray_range() const { return RayRange{0.1, diameter()}; }
};

struct SdfSample {
  double distance = 0.0;
  Color albedo = Color::Zero();
};

double sphere_sdf(const Vec3& x, const Vec3& center, double radius);
double box_sdf(const Vec3& x, const Vec3& center, const Vec3& half_extents);
SdfSample scene_sdf(const SyntheticScene& scene, const Vec3& x);

// Direction towards the light used for Lambert shading.
Vec3 light_direction();

struct TraceHit {
  double depth = 0.0;
  Color color = Color::Zero();
};

TraceHit trace_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& direction);

struct ReferenceView {
  Image image;  // H x W x 3
  Image depth;  // H x W x 1, distance along the unit ray
};

// Sphere-traced ground truth at pixel centers.
ReferenceView trace_reference(const SyntheticScene& scene, const Camera& camera);

struct LidarConfig {
  Vec3 origin = Vec3::Zero();
  Vec3 forward = Vec3::UnitZ();  // sector center direction (horizontal component is used)
  std::vector<double> ring_elevations_deg = {-24.0, -18.0, -12.0, -6.0, 0.0, 6.0};
  double azimuth_span_deg = 90.0;  // full width of the scanned sector
};

// Default sensor: mounted at the first train camera, facing the ROI center.
LidarConfig default_lidar(const SyntheticScene& scene);

struct LidarReturn {
  Ray ray;
  double depth = 0.0;
  int ring = 0;
};

std::vector<LidarReturn> simulate_lidar(const SyntheticScene& scene, const LidarConfig& config, int n_rays,
                                        RngState& rng);

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  long valid_count = 0;
};

// Metrics over pixels with mask set and 0 < gt <= cap. Predictions are clamped
// to [1e-3, cap] before evaluation.
DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt, std::span<const bool> mask,
                           double cap);

double psnr(const Image& pred, const Image& gt);
double ssim(const Image& pred, const Image& gt);

// Named scene presets: "sphere", "sphere-box", "crowd".
SyntheticScene make_preset(const std::string& name);
const std::vector<std::string>& preset_names();

}  // namespace nerp
