#include "nerp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nerp {

void LossWeights::validate() const {
  if (!(rgb >= 0.0) || !(depth >= 0.0) || !(reproj >= 0.0)) {
    throw std::domain_error("loss weights must be nonnegative");
  }
}

std::size_t RayBatch::color_count() const {
  return static_cast<std::size_t>(std::count_if(gt_color.begin(), gt_color.end(), [](const auto& c) { return c.has_value(); }));
}

std::size_t RayBatch::depth_count() const {
  return static_cast<std::size_t>(std::count_if(gt_depth.begin(), gt_depth.end(), [](const auto& d) { return d.has_value(); }));
}

void RayBatch::validate() const {
  if (gt_color.size() != rays.size() || gt_depth.size() != rays.size()) {
    throw std::domain_error("ray batch target arrays do not match the ray count");
  }
  for (const auto& c : gt_color) {
    if (c && !((c->array() >= 0.0).all() && (c->array() <= 1.0).all())) {
      throw std::domain_error("ray batch colors must lie in [0,1]");
    }
  }
  for (const auto& d : gt_depth) {
    if (d && !(*d > 0.0)) throw std::domain_error("ray batch depths must be positive");
  }
}

double rgb_loss(std::span<const Color> rendered, const RayBatch& batch) {
  if (batch.size() == 0) throw std::domain_error("rgb_loss: empty batch");
  if (rendered.size() != batch.size()) throw std::domain_error("rgb_loss: size mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.gt_color[i]) continue;
    sum += (rendered[i] - *batch.gt_color[i]).cwiseAbs().sum() / 3.0;
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

double depth_loss(std::span<const double> rendered_depth, const RayBatch& batch) {
  if (rendered_depth.size() != batch.size()) throw std::domain_error("depth_loss: size mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.gt_depth[i]) continue;
    sum += std::abs(rendered_depth[i] - *batch.gt_depth[i]);
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

Color sample_image(const Image& image, double u, double v, Color* d_u, Color* d_v) {
  // Continuous pixel coordinates to texel-center coordinates, clamped to the border.
  double x = u - 0.5;
  double y = v - 0.5;
  bool clamp_x = false;
  bool clamp_y = false;
  if (x < 0.0) { x = 0.0; clamp_x = true; }
  if (y < 0.0) { y = 0.0; clamp_y = true; }
  if (x > image.width - 1) { x = image.width - 1; clamp_x = true; }
  if (y > image.height - 1) { y = image.height - 1; clamp_y = true; }
  const int x0 = std::min(static_cast<int>(std::floor(x)), std::max(image.width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(y)), std::max(image.height - 2, 0));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  Color c00, c10, c01, c11;
  for (int c = 0; c < 3; ++c) {
    c00[c] = image.at(y0, x0, c);
    c10[c] = image.at(y0, x1, c);
    c01[c] = image.at(y1, x0, c);
    c11[c] = image.at(y1, x1, c);
  }
  const Color top = (1.0 - fx) * c00 + fx * c10;
  const Color bottom = (1.0 - fx) * c01 + fx * c11;
  if (d_u != nullptr) *d_u = clamp_x ? Color::Zero() : Color((1.0 - fy) * (c10 - c00) + fy * (c11 - c01));
  if (d_v != nullptr) *d_v = clamp_y ? Color::Zero() : Color(bottom - top);
  return (1.0 - fy) * top + fy * bottom;
}

double reprojection_error(const Vec3& point, const Color& target, std::span<const SourceView> sources,
                          Vec3* d_point) {
  double sum = 0.0;
  int valid = 0;
  Vec3 grad = Vec3::Zero();
  for (const auto& src : sources) {
    const auto& cam = src.camera.intrinsics;
    const Projection p = project(point, cam, src.camera.pose);
    if (!p.valid) continue;
    ++valid;
    Color du, dv;
    const Color diff = sample_image(src.image, p.u, p.v, &du, &dv) - target;
    sum += diff.cwiseAbs().sum() / 3.0;
    if (d_point != nullptr) {
      const Color sign = diff.array().sign().matrix() / 3.0;
      const Vec3 local = src.camera.pose.rotation.transpose() * (point - src.camera.pose.translation);
      const double iz = 1.0 / local.z();
      const Vec3 du_dlocal(cam.fx * iz, 0.0, -cam.fx * local.x() * iz * iz);
      const Vec3 dv_dlocal(0.0, cam.fy * iz, -cam.fy * local.y() * iz * iz);
      grad += src.camera.pose.rotation * (sign.dot(du) * du_dlocal + sign.dot(dv) * dv_dlocal);
    }
  }
  if (valid == 0) {
    if (d_point != nullptr) d_point->setZero();
    return 0.0;
  }
  if (d_point != nullptr) *d_point = grad / valid;
  return sum / valid;
}

double reprojection_loss(std::span<const RaySamples> samples, std::span<const std::vector<double>> weights,
                         const RayBatch& batch, ReprojectionGrad* grad) {
  if (!batch.source_views || batch.source_views->empty()) {
    throw std::domain_error("reprojection_loss needs at least one source view");
  }
  if (samples.size() != batch.size() || weights.size() != batch.size()) {
    throw std::domain_error("reprojection_loss: size mismatch");
  }
  const std::size_t rays = batch.color_count();
  if (grad != nullptr) {
    grad->d_weights.assign(batch.size(), {});
    grad->d_points.assign(batch.size(), {});
  }
  if (rays == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.gt_color[i]) continue;
    const auto& s = samples[i];
    if (weights[i].size() != s.size()) throw std::domain_error("reprojection_loss: weight count mismatch");
    if (grad != nullptr) {
      grad->d_weights[i].assign(s.size(), 0.0);
      grad->d_points[i].assign(s.size(), Vec3::Zero());
    }
    for (std::size_t j = 0; j < s.size(); ++j) {
      Vec3 d_x;
      const double e = reprojection_error(s.points[j], *batch.gt_color[i], *batch.source_views,
                                          grad != nullptr ? &d_x : nullptr);
      sum += weights[i][j] * e;
      if (grad != nullptr) {
        grad->d_weights[i][j] = e / rays;
        grad->d_points[i][j] = weights[i][j] * d_x / rays;
      }
    }
  }
  return sum / rays;
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  return weights.rgb * parts.rgb + weights.depth * parts.depth + weights.reproj * parts.reproj;
}

}  // namespace nerp
