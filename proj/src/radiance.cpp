#include "nerp/radiance.hpp"

#include <cmath>
#include <stdexcept>

#include "nerp/nn.hpp"

namespace nerp {

double sharp_sigmoid(double x, double omega) { return nn::sigmoid(omega * x); }

double sdf_to_alpha(double s, double s_next, double omega) { return sdf_to_alpha_grad(s, s_next, omega).alpha; }

AlphaGrad sdf_to_alpha_grad(double s, double s_next, double omega) {
  AlphaGrad g;
  const double a = omega * s;
  const double b = omega * s_next;
  if (!(b < a)) return g;
  // Phi(b)/Phi(a) = exp(softplus(-a) - softplus(-b)).
  const double ratio = std::exp(nn::softplus(-a) - nn::softplus(-b));
  g.alpha = -std::expm1(nn::softplus(-a) - nn::softplus(-b));
  const double da = ratio * nn::sigmoid(-a);
  const double db = -ratio * nn::sigmoid(-b);
  g.d_s = da * omega;
  g.d_next = db * omega;
  g.d_omega = da * s + db * s_next;
  return g;
}

DensityAlpha density_to_alpha(double raw, double delta) {
  const double sigma = nn::softplus(raw);
  const double transmit = std::exp(-sigma * delta);
  return DensityAlpha{-std::expm1(-sigma * delta), transmit * delta * nn::sigmoid(raw)};
}

RenderResult render_ray(std::span<const double> t_values, std::span<const double> alphas,
                        std::span<const Color> colors) {
  const std::size_t d = t_values.size();
  if (alphas.size() != d || colors.size() != d) throw std::domain_error("render_ray: length mismatch");
  RenderResult r;
  r.weights.resize(d);
  r.transmittance.resize(d);
  double transmit = 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    r.transmittance[j] = transmit;
    const double w = transmit * alphas[j];
    r.weights[j] = w;
    r.color += w * colors[j];
    r.depth += w * t_values[j];
    r.opacity_sum += w;
    transmit *= 1.0 - alphas[j];
  }
  return r;
}

RenderResult render_ray(const RaySamples& samples, std::span<const double> alphas, std::span<const Color> colors) {
  return render_ray(samples.t_values, alphas, colors);
}

RenderGrad render_ray_backward(std::span<const double> t_values, std::span<const double> alphas,
                               std::span<const Color> colors, const RenderResult& forward, const Color& d_color,
                               double d_depth, std::span<const double> d_weights_extra) {
  const std::size_t d = t_values.size();
  RenderGrad g;
  g.d_alpha.resize(d);
  g.d_color.resize(d);
  g.d_t.resize(d);
  double d_transmit_next = 0.0;
  for (std::size_t j = d; j-- > 0;) {
    const double w = forward.weights[j];
    double d_w = d_color.dot(colors[j]) + d_depth * t_values[j];
    if (!d_weights_extra.empty()) d_w += d_weights_extra[j];
    g.d_color[j] = w * d_color;
    g.d_t[j] = w * d_depth;
    const double transmit = forward.transmittance[j];
    g.d_alpha[j] = d_w * transmit - d_transmit_next * transmit;
    d_transmit_next = d_w * alphas[j] + d_transmit_next * (1.0 - alphas[j]);
  }
  return g;
}

namespace {

std::vector<double> run_mlp(const std::vector<DenseSlot>& layers, const ParamTape& tape, std::vector<double> x) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> y(layers[l].out);
    nn::affine(x, tape.value(layers[l].weight).data(), tape.value(layers[l].bias).data(), layers[l].out, y.data());
    if (l + 1 < layers.size()) nn::softplus_inplace(y.data(), layers[l].out);
    x = std::move(y);
  }
  return x;
}

}  // namespace

double sdf_value(const FieldModel& model, const ParamTape& tape, const PointEmbedding& embedding) {
  std::vector<double> input = embedding.z;
  const auto enc = positional_encode(contract(embedding.point, model.config.contraction),
                                     model.config.position_encoding);
  input.insert(input.end(), enc.begin(), enc.end());
  return run_mlp(model.sdf_mlp, tape, std::move(input))[0];
}

Color color_value(const FieldModel& model, const ParamTape& tape, const PointEmbedding& embedding,
                  const Vec3& view_dir) {
  if (std::abs(view_dir.norm() - 1.0) > 1e-9) throw std::domain_error("color_value: view direction must be unit");
  std::vector<double> input = embedding.z;
  const auto enc = positional_encode(view_dir, model.config.direction_encoding);
  input.insert(input.end(), enc.begin(), enc.end());
  const auto out = run_mlp(model.rgb_mlp, tape, std::move(input));
  return Color(nn::sigmoid(out[0]), nn::sigmoid(out[1]), nn::sigmoid(out[2]));
}

double omega(const FieldModel& model, const ParamTape& tape) { return std::exp(tape.value(model.log_omega)[0]); }

}  // namespace nerp
