#include "nerp/synthkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nerp {

std::string to_string(PrimitiveKind kind) { return kind == PrimitiveKind::Sphere ? "sphere" : "box"; }

std::string to_string(CameraRole role) {
  switch (role) {
    case CameraRole::Train: return "train";
    case CameraRole::Heldout: return "heldout";
    case CameraRole::Source: return "source";
  }
  return "train";
}

CameraRole camera_role_from_string(const std::string& name) {
  if (name == "train") return CameraRole::Train;
  if (name == "heldout") return CameraRole::Heldout;
  if (name == "source") return CameraRole::Source;
  throw std::invalid_argument("unknown camera role '" + name + "'");
}

void SyntheticScene::validate() const {
  if (primitives.empty()) throw std::domain_error("scene needs at least one primitive");
  auto count = [&](CameraRole r) {
    return std::count_if(cameras.begin(), cameras.end(), [&](const SceneCamera& c) { return c.role == r; });
  };
  if (count(CameraRole::Train) < 2) throw std::domain_error("scene needs at least two train cameras");
  if (count(CameraRole::Heldout) < 1) throw std::domain_error("scene needs a heldout camera");
  if (count(CameraRole::Source) < 1) throw std::domain_error("scene needs a source camera");
  for (const auto& p : primitives) {
    if (p.kind == PrimitiveKind::Sphere && !(p.radius > 0.0)) throw std::domain_error("sphere radius must be positive");
    if (p.kind == PrimitiveKind::Box && !(p.half_extents.array() > 0.0).all()) {
      throw std::domain_error("box half extents must be positive");
    }
    const double reach = p.kind == PrimitiveKind::Sphere ? p.radius : p.half_extents.norm();
    if ((p.center - background.center).norm() + reach >= background.radius) {
      throw std::domain_error("background sphere must enclose every primitive");
    }
  }
  for (const auto& c : cameras) {
    c.camera.intrinsics.validate();
    c.camera.pose.validate();
    if ((c.camera.pose.translation - background.center).norm() >= background.radius) {
      throw std::domain_error("background sphere must enclose every camera");
    }
  }
  roi.validate();
}

std::vector<Camera> SyntheticScene::cameras_with_role(CameraRole role) const {
  std::vector<Camera> out;
  for (const auto& c : cameras) {
    if (c.role == role) out.push_back(c.camera);
  }
  return out;
}

double sphere_sdf(const Vec3& x, const Vec3& center, double radius) { return (x - center).norm() - radius; }

double box_sdf(const Vec3& x, const Vec3& center, const Vec3& half_extents) {
  const Vec3 q = (x - center).cwiseAbs() - half_extents;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

SdfSample scene_sdf(const SyntheticScene& scene, const Vec3& x) {
  SdfSample best;
  best.distance = scene.background.radius - (x - scene.background.center).norm();
  best.albedo = scene.background.albedo;
  for (const auto& p : scene.primitives) {
    const double d = p.kind == PrimitiveKind::Sphere ? sphere_sdf(x, p.center, p.radius)
                                                     : box_sdf(x, p.center, p.half_extents);
    if (d < best.distance) {
      best.distance = d;
      best.albedo = p.albedo;
    }
  }
  return best;
}

Vec3 light_direction() { return Vec3(0.35, 0.85, 0.4).normalized(); }

TraceHit trace_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& direction) {
  double t = 0.0;
  SdfSample s = scene_sdf(scene, origin);
  for (int step = 0; step < 256 && std::abs(s.distance) >= 1e-5; ++step) {
    t += s.distance;
    s = scene_sdf(scene, origin + t * direction);
  }
  const Vec3 hit = origin + t * direction;
  constexpr double h = 1e-4;
  Vec3 normal;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    normal[a] = scene_sdf(scene, hit + e).distance - scene_sdf(scene, hit - e).distance;
  }
  normal.normalize();
  TraceHit out;
  out.depth = t;
  out.color = s.albedo * (0.3 + 0.7 * std::max(0.0, normal.dot(light_direction())));
  return out;
}

ReferenceView trace_reference(const SyntheticScene& scene, const Camera& camera) {
  const auto& cam = camera.intrinsics;
  ReferenceView view{Image(cam.height, cam.width, 3), Image(cam.height, cam.width, 1)};
#pragma omp parallel for schedule(static)
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = generate_ray(cam, camera.pose, x + 0.5, y + 0.5, scene.ray_range());
      const TraceHit hit = trace_ray(scene, ray.origin, ray.direction);
      for (int c = 0; c < 3; ++c) view.image.at(y, x, c) = hit.color[c];
      view.depth.at(y, x) = hit.depth;
    }
  }
  return view;
}

LidarConfig default_lidar(const SyntheticScene& scene) {
  LidarConfig cfg;
  const auto train = scene.cameras_with_role(CameraRole::Train);
  if (train.empty()) throw std::domain_error("default_lidar: scene has no train camera");
  cfg.origin = train.front().pose.translation;
  cfg.forward = scene.roi.center() - cfg.origin;
  return cfg;
}

std::vector<LidarReturn> simulate_lidar(const SyntheticScene& scene, const LidarConfig& config, int n_rays,
                                        RngState& rng) {
  if (n_rays < 0) throw std::domain_error("simulate_lidar: negative ray count");
  if (config.ring_elevations_deg.empty()) throw std::domain_error("simulate_lidar: no rings configured");
  const Vec3 up = Vec3::UnitY();
  const Vec3 forward = (config.forward - config.forward.dot(up) * up).normalized();
  const Vec3 right = forward.cross(up).normalized();
  constexpr double deg = std::numbers::pi / 180.0;
  std::vector<LidarReturn> out;
  out.reserve(n_rays);
  const int rings = static_cast<int>(config.ring_elevations_deg.size());
  for (int i = 0; i < n_rays; ++i) {
    const int ring = i % rings;
    const double elevation = config.ring_elevations_deg[ring] * deg;
    const double azimuth = (rng.next_uniform() - 0.5) * config.azimuth_span_deg * deg;
    LidarReturn r;
    r.ring = ring;
    r.ray.origin = config.origin;
    r.ray.t_near = scene.ray_range().t_near;
    r.ray.t_far = scene.ray_range().t_far;
    r.ray.direction = (std::cos(elevation) * (std::cos(azimuth) * forward + std::sin(azimuth) * right) +
                       std::sin(elevation) * up)
                          .normalized();
    r.depth = trace_ray(scene, r.ray.origin, r.ray.direction).depth;
    out.push_back(r);
  }
  return out;
}

DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt, std::span<const bool> mask,
                           double cap) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) throw std::domain_error("depth_metrics: shape mismatch");
  if (!(cap > 0.0)) throw std::domain_error("depth_metrics: cap must be positive");
  DepthMetrics m;
  double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
  long d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i];
    if (!mask[i] || !(g > 0.0) || g > cap) continue;
    const double p = std::clamp(pred[i], 1e-3, cap);
    const double err = p - g;
    abs_rel += std::abs(err) / g;
    sq_rel += err * err / g;
    sq += err * err;
    const double le = std::log(p) - std::log(g);
    sq_log += le * le;
    const double ratio = std::max(p / g, g / p);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    ++m.valid_count;
  }
  if (m.valid_count == 0) throw std::domain_error("depth_metrics: no valid pixels");
  const double n = static_cast<double>(m.valid_count);
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.rmse = std::sqrt(sq / n);
  m.rmse_log = std::sqrt(sq_log / n);
  m.delta1 = d1 / n;
  m.delta2 = d2 / n;
  m.delta3 = d3 / n;
  return m;
}

double psnr(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt) || gt.data.empty()) throw std::domain_error("psnr: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    sum += d * d;
  }
  const double mse = sum / gt.data.size();
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt) || gt.data.empty()) throw std::domain_error("ssim: shape mismatch");
  // 11x11 Gaussian (sigma 1.5), shrunk to the largest odd size that fits small images.
  int size = 11;
  while (size > 1 && (size > gt.height || size > gt.width)) size -= 2;
  const int radius = size / 2;
  std::vector<double> kernel(size);
  double ksum = 0.0;
  for (int i = 0; i < size; ++i) {
    kernel[i] = std::exp(-0.5 * (i - radius) * (i - radius) / (1.5 * 1.5));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int out_h = gt.height - size + 1;
  const int out_w = gt.width - size + 1;
  double total = 0.0;
  for (int c = 0; c < gt.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
        for (int dy = 0; dy < size; ++dy) {
          for (int dx = 0; dx < size; ++dx) {
            const double w = kernel[dy] * kernel[dx];
            const double a = pred.at(y + dy, x + dx, c);
            const double b = gt.at(y + dy, x + dx, c);
            mu_a += w * a;
            mu_b += w * b;
            aa += w * a * a;
            bb += w * b * b;
            ab += w * a * b;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    }
  }
  return total / (static_cast<double>(out_h) * out_w * gt.channels);
}

namespace {

std::vector<SceneCamera> default_rig() {
  CameraIntrinsics intr{64.0, 64.0, 32.0, 32.0, 64, 64};
  const Vec3 target = Vec3::Zero();
  const Vec3 up = Vec3::UnitY();
  constexpr double deg = std::numbers::pi / 180.0;
  auto at = [&](double azimuth_deg, double radius, double height) {
    const double a = azimuth_deg * deg;
    return Vec3(radius * std::cos(a), height, radius * std::sin(a));
  };
  std::vector<SceneCamera> rig;
  for (int i = 0; i < 8; ++i) {
    rig.push_back({Camera{intr, CameraPose::look_at(at(45.0 * i, 3.6, 0.8), target, up)}, CameraRole::Train});
  }
  rig.push_back({Camera{intr, CameraPose::look_at(at(22.5, 3.6, 1.2), target, up)}, CameraRole::Heldout});
  rig.push_back({Camera{intr, CameraPose::look_at(at(67.5, 3.8, 0.3), target, up)}, CameraRole::Source});
  return rig;
}

Primitive sphere(const Vec3& c, double r, const Color& albedo) {
  Primitive p;
  p.kind = PrimitiveKind::Sphere;
  p.center = c;
  p.radius = r;
  p.albedo = albedo;
  return p;
}

Primitive box(const Vec3& c, const Vec3& half, const Color& albedo) {
  Primitive p;
  p.kind = PrimitiveKind::Box;
  p.center = c;
  p.half_extents = half;
  p.albedo = albedo;
  return p;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"sphere", "sphere-box", "crowd"};
  return names;
}

SyntheticScene make_preset(const std::string& name) {
  SyntheticScene scene;
  scene.background.radius = 4.5;
  scene.roi.roi_min = Vec3::Constant(-5.0);
  scene.roi.roi_max = Vec3::Constant(5.0);
  scene.background.albedo = Color(0.6, 0.65, 0.75);
  scene.cameras = default_rig();
  if (name == "sphere") {
    scene.primitives.push_back(sphere(Vec3::Zero(), 1.0, Color(0.85, 0.35, 0.25)));
  } else if (name == "sphere-box") {
    scene.primitives.push_back(sphere(Vec3(-0.75, 0.05, 0.25), 0.75, Color(0.9, 0.4, 0.2)));
    scene.primitives.push_back(box(Vec3(0.75, -0.2, -0.3), Vec3(0.5, 0.55, 0.45), Color(0.25, 0.6, 0.85)));
  } else if (name == "crowd") {
    const Vec3 centers[6] = {Vec3(-1.1, 0.0, -0.4), Vec3(-0.45, -0.1, 0.6), Vec3(0.3, 0.1, -0.75),
                             Vec3(0.95, 0.0, 0.3),  Vec3(0.1, -0.05, 0.05), Vec3(-0.6, 0.05, -1.15)};
    const double radii[6] = {0.35, 0.3, 0.4, 0.35, 0.3, 0.3};
    const Color albedos[6] = {Color(0.9, 0.3, 0.3), Color(0.3, 0.8, 0.35), Color(0.3, 0.4, 0.9),
                              Color(0.9, 0.8, 0.3), Color(0.8, 0.4, 0.85), Color(0.35, 0.85, 0.85)};
    for (int i = 0; i < 6; ++i) scene.primitives.push_back(sphere(centers[i], radii[i], albedos[i]));
  } else {
    throw std::invalid_argument("unknown scene preset '" + name + "'");
  }
  scene.validate();
  return scene;
}

}  // namespace nerp
