#include "nerp/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nerp {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::domain_error("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::domain_error("camera image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw std::domain_error("camera principal point must lie inside the image");
  }
}

void CameraPose::validate() const {
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw std::domain_error("camera rotation must be orthonormal with determinant +1");
  }
  if (!translation.allFinite()) throw std::domain_error("camera translation must be finite");
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

void ContractionConfig::validate() const {
  if (!((roi_min.array() < roi_max.array()).all())) {
    throw std::domain_error("ROI minimum must be below maximum on every axis");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("contraction alpha must lie in [0,1]");
}

Ray generate_ray(const CameraIntrinsics& cam, const CameraPose& pose, double u, double v,
                 RayRange range) {
  if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height)) {
    throw std::domain_error("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") lies outside the image");
  }
  const Vec3 local((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = (pose.rotation * local).normalized();
  ray.t_near = range.t_near;
  ray.t_far = range.t_far;
  return ray;
}

Projection project(const Vec3& point, const CameraIntrinsics& cam, const CameraPose& pose) {
  const Vec3 local = pose.rotation.transpose() * (point - pose.translation);
  Projection out;
  if (!(local.z() > 0.0)) return out;
  out.u = cam.cx + cam.fx * local.x() / local.z();
  out.v = cam.cy + cam.fy * local.y() / local.z();
  out.valid = out.u >= 0.0 && out.u < cam.width && out.v >= 0.0 && out.v < cam.height;
  return out;
}

Vec3 normalize_to_roi(const Vec3& point, const ContractionConfig& cfg) {
  return (2.0 * (point - cfg.center()).array() / (cfg.roi_max - cfg.roi_min).array()).matrix();
}

Vec3 contract_normalized(const Vec3& normalized, double alpha) {
  const double norm = normalized.norm();
  if (norm <= 1.0) return alpha * normalized;
  return (1.0 - (1.0 - alpha) / norm) * (normalized / norm);
}

Vec3 contract(const Vec3& point, const ContractionConfig& cfg) {
  const Vec3 normalized = normalize_to_roi(point, cfg);
  if (!cfg.enabled) return normalized;
  return contract_normalized(normalized, cfg.alpha);
}

void positional_encode(const Vec3& point, const EncodingConfig& cfg, std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(cfg.output_size())) {
    throw std::invalid_argument("positional_encode: output span has the wrong size");
  }
  std::size_t k = 0;
  if (cfg.include_input) {
    for (int a = 0; a < 3; ++a) out[k++] = point[a];
  }
  double freq = std::numbers::pi;
  for (int band = 0; band < cfg.num_bands; ++band, freq *= 2.0) {
    for (int a = 0; a < 3; ++a) out[k + a] = std::sin(freq * point[a]);
    for (int a = 0; a < 3; ++a) out[k + 3 + a] = std::cos(freq * point[a]);
    k += 6;
  }
}

std::vector<double> positional_encode(const Vec3& point, const EncodingConfig& cfg) {
  std::vector<double> out(cfg.output_size());
  positional_encode(point, cfg, out);
  return out;
}

}  // namespace nerp
