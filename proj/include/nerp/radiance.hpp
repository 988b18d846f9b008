#pragma once

#include <span>
#include <vector>

#include "nerp/conditioning.hpp"
#include "nerp/geometry.hpp"
#include "nerp/model.hpp"
#include "nerp/sampling.hpp"

namespace nerp {

using Color = Eigen::Vector3d;

// Phi_omega(x) = 1 / (1 + exp(-omega x)).
double sharp_sigmoid(double x, double omega);

// Opacity of the interval between consecutive SDF samples:
// max((Phi(s) - Phi(s_next)) / Phi(s), 0), evaluated in log space.
double sdf_to_alpha(double s, double s_next, double omega);

struct AlphaGrad {
  double alpha = 0.0;
  double d_s = 0.0;
  double d_next = 0.0;
  double d_omega = 0.0;
};
AlphaGrad sdf_to_alpha_grad(double s, double s_next, double omega);

// Density variant: alpha = 1 - exp(-softplus(raw) * delta).
struct DensityAlpha {
  double alpha = 0.0;
  double d_raw = 0.0;
};
DensityAlpha density_to_alpha(double raw, double delta);

struct RenderResult {
  Color color = Color::Zero();
  double depth = 0.0;
  std::vector<double> weights;
  std::vector<double> transmittance;
  double opacity_sum = 0.0;
};

RenderResult render_ray(std::span<const double> t_values, std::span<const double> alphas,
                        std::span<const Color> colors);
RenderResult render_ray(const RaySamples& samples, std::span<const double> alphas, std::span<const Color> colors);

// Reverse pass of render_ray. `d_weights_extra` (optional, size D) adds direct
// loss sensitivities on the weights, e.g. from the reprojection term.
struct RenderGrad {
  std::vector<double> d_alpha;
  std::vector<Color> d_color;
  std::vector<double> d_t;
};
RenderGrad render_ray_backward(std::span<const double> t_values, std::span<const double> alphas,
                               std::span<const Color> colors, const RenderResult& forward, const Color& d_color,
                               double d_depth, std::span<const double> d_weights_extra = {});

// Single-point head evaluations (plain loops).
double sdf_value(const FieldModel& model, const ParamTape& tape, const PointEmbedding& embedding);
Color color_value(const FieldModel& model, const ParamTape& tape, const PointEmbedding& embedding,
                  const Vec3& view_dir);
double omega(const FieldModel& model, const ParamTape& tape);

}  // namespace nerp
