#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nerp/geometry.hpp"
#include "nerp/image.hpp"
#include "nerp/radiance.hpp"
#include "nerp/sampling.hpp"

namespace nerp {

struct LossWeights {
  double rgb = 10.0;
  double depth = 10.0;
  double reproj = 10.0;

  void validate() const;
};

struct LossParts {
  double rgb = 0.0;
  double depth = 0.0;
  double reproj = 0.0;
};

struct SourceView {
  Image image;
  Camera camera;
};

// Rays with optional color and depth targets. Camera rays carry a color; LiDAR
// rays carry a depth. Source views are shared between batches.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<std::optional<Color>> gt_color;
  std::vector<std::optional<double>> gt_depth;
  std::shared_ptr<const std::vector<SourceView>> source_views;

  std::size_t size() const { return rays.size(); }
  void add(const Ray& ray, std::optional<Color> color, std::optional<double> depth) {
    rays.push_back(ray);
    gt_color.push_back(color);
    gt_depth.push_back(depth);
  }
  std::size_t color_count() const;
  std::size_t depth_count() const;
  void validate() const;
};

// Mean over color rays of the channel-mean absolute error.
double rgb_loss(std::span<const Color> rendered, const RayBatch& batch);
// Mean absolute error over rays with a depth target; 0 when there are none.
double depth_loss(std::span<const double> rendered_depth, const RayBatch& batch);

// Bilinear color lookup at continuous pixel coordinates (pixel k centered at
// k + 0.5), clamped at the image border. Optional outputs are d/du and d/dv.
Color sample_image(const Image& image, double u, double v, Color* d_u = nullptr, Color* d_v = nullptr);

// Photometric error of one sample point against all source views: mean over
// views with a valid projection of the channel-mean |target - source|. Zero
// when no view sees the point. `d_point` receives the derivative w.r.t. x.
double reprojection_error(const Vec3& point, const Color& target, std::span<const SourceView> sources,
                          Vec3* d_point = nullptr);

struct ReprojectionGrad {
  std::vector<std::vector<double>> d_weights;  // per ray, per sample
  std::vector<std::vector<Vec3>> d_points;     // per ray, per sample
};

// (1/|R|) sum over color rays of sum_j w_j * error(x_j). Weights and samples are
// given per ray of the batch; rays without a color target contribute nothing.
double reprojection_loss(std::span<const RaySamples> samples, std::span<const std::vector<double>> weights,
                         const RayBatch& batch, ReprojectionGrad* grad = nullptr);

double total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace nerp
