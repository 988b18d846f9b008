#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace nerp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  // Throws std::domain_error when the intrinsics are degenerate.
  void validate() const;
};

// Camera-to-world rigid transform. Camera frame: +x right, +y down, +z forward.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;

  // Pose at `eye` looking at `target`, with `up` giving the world up direction.
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

struct RayRange {
  double t_near = 0.1;
  double t_far = 12.0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.1;
  double t_far = 12.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  bool valid = false;
};

// Region of interest and the contraction applied to normalized coordinates.
// When `enabled` is false the coordinate map stops at the normalized frame.
struct ContractionConfig {
  Vec3 roi_min = Vec3::Constant(-2.0);
  Vec3 roi_max = Vec3::Constant(2.0);
  double alpha = 0.8;
  bool enabled = true;

  void validate() const;
  Vec3 center() const { return 0.5 * (roi_min + roi_max); }
};

struct EncodingConfig {
  int num_bands = 6;
  bool include_input = true;

  int output_size() const { return (include_input ? 3 : 0) + 6 * num_bands; }
};

// Ray through continuous pixel coordinates (u, v); pixel k spans [k, k+1).
Ray generate_ray(const CameraIntrinsics& cam, const CameraPose& pose, double u, double v,
                 RayRange range = {});

Projection project(const Vec3& point, const CameraIntrinsics& cam, const CameraPose& pose);

// Maps a world point into the ROI-centered frame where the ROI spans [-1, 1]^3.
Vec3 normalize_to_roi(const Vec3& point, const ContractionConfig& cfg);

// Contraction of an already-normalized point.
Vec3 contract_normalized(const Vec3& normalized, double alpha);

// Full coordinate map: normalize to the ROI frame, then contract.
Vec3 contract(const Vec3& point, const ContractionConfig& cfg);

// Writes cfg.output_size() values: [input], then per band k: sin(2^k pi p) xyz, cos(2^k pi p) xyz.
void positional_encode(const Vec3& point, const EncodingConfig& cfg, std::span<double> out);
std::vector<double> positional_encode(const Vec3& point, const EncodingConfig& cfg);

}  // namespace nerp
