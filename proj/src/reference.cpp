#include "nerp/reference.hpp"

#include <cmath>

#include "nerp/nn.hpp"
#include "nerp/radiance.hpp"

namespace nerp::reference {
namespace {

struct PointQuery {
  std::vector<double> offsets;    // heads * points * 2
  std::vector<double> attention;  // heads * points
};

std::vector<double> two_layer(const std::vector<DenseSlot>& net, const ParamTape& tape, const std::vector<double>& x) {
  std::vector<double> hidden(net[0].out, 0.0);
  for (int o = 0; o < net[0].out; ++o) {
    double acc = tape.value(net[0].bias)[o];
    for (int k = 0; k < net[0].in; ++k) acc += x[k] * tape.value(net[0].weight)[k * net[0].out + o];
    hidden[o] = nn::softplus(acc);
  }
  std::vector<double> out(net[1].out, 0.0);
  for (int o = 0; o < net[1].out; ++o) {
    double acc = tape.value(net[1].bias)[o];
    for (int k = 0; k < net[1].in; ++k) acc += hidden[k] * tape.value(net[1].weight)[k * net[1].out + o];
    out[o] = acc;
  }
  return out;
}

PointQuery query(const FieldModel& model, const ParamTape& tape, const Vec3& x) {
  const auto enc = positional_encode(contract(x, model.config.contraction), model.config.position_encoding);
  PointQuery q;
  q.offsets = two_layer(model.offset_net, tape, enc);
  const auto logits = two_layer(model.attn_net, tape, enc);
  const int nh = model.num_heads();
  const int ns = model.num_points();
  q.attention.resize(nh * ns);
  for (int h = 0; h < nh; ++h) {
    double denom = 0.0;
    for (int s = 0; s < ns; ++s) denom += std::exp(logits[h * ns + s]);
    for (int s = 0; s < ns; ++s) q.attention[h * ns + s] = std::exp(logits[h * ns + s]) / denom;
  }
  return q;
}

}  // namespace

std::vector<double> attention_weights(const FieldModel& model, const ParamTape& tape, const Vec3& x) {
  return query(model, tape, x).attention;
}

PointEmbedding embed_point(const FieldModel& model, const ParamTape& tape, const FeatureMap& fm, const Vec3& x) {
  const int c = model.channels();
  const int nh = model.num_heads();
  const int ns = model.num_points();
  const int dh = model.head_dim();
  const auto q = query(model, tape, x);
  const auto w_head = tape.value(model.head_out);
  const auto w_value = tape.value(model.value_proj);

  PointEmbedding out;
  out.point = x;
  out.z.assign(c, 0.0);
  for (int v = 0; v < fm.num_views; ++v) {
    const Projection p = project(x, fm.cameras[v].intrinsics, fm.cameras[v].pose);
    if (!p.valid) continue;
    ++out.valid_views;
    const double base_u = pixel_to_cell(p.u, fm.stride);
    const double base_v = pixel_to_cell(p.v, fm.stride);
    std::vector<double> z_view(c, 0.0);
    for (int h = 0; h < nh; ++h) {
      std::vector<double> head(dh, 0.0);
      for (int s = 0; s < ns; ++s) {
        const int hs = h * ns + s;
        const auto f = bilinear_sample(fm, v, base_u + q.offsets[2 * hs], base_v + q.offsets[2 * hs + 1]);
        // W'_s F
        for (int d = 0; d < dh; ++d) {
          double proj = 0.0;
          for (int k = 0; k < c; ++k) proj += w_value[(static_cast<std::size_t>(s) * c + k) * dh + d] * f[k];
          head[d] += q.attention[hs] * proj;
        }
      }
      // W_h head
      for (int k = 0; k < c; ++k) {
        for (int d = 0; d < dh; ++d) z_view[k] += w_head[(static_cast<std::size_t>(h) * dh + d) * c + k] * head[d];
      }
    }
    for (int k = 0; k < c; ++k) out.z[k] += z_view[k];
  }
  if (out.valid_views > 0) {
    for (double& z : out.z) z /= out.valid_views;
  }
  return out;
}

BatchResult evaluate_batch(const FieldModel& model, const ParamTape& tape, const FeatureMap& fm,
                           const RayBatch& batch, std::span<const double> t_values, int samples_per_ray,
                           const LossWeights& weights) {
  const int d = samples_per_ray;
  const double w = omega(model, tape);
  BatchResult result;
  std::vector<RaySamples> all_samples;
  std::vector<std::vector<double>> all_weights;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Ray& ray = batch.rays[i];
    RaySamples samples;
    samples.ray = ray;
    samples.t_values.assign(t_values.begin() + i * d, t_values.begin() + (i + 1) * d);
    for (double t : samples.t_values) samples.points.push_back(ray.at(t));
    std::vector<double> s(d);
    std::vector<Color> colors(d);
    for (int j = 0; j < d; ++j) {
      const auto z = embed_point(model, tape, fm, samples.points[j]);
      s[j] = sdf_value(model, tape, z);
      colors[j] = color_value(model, tape, z, ray.direction);
    }
    std::vector<double> alphas(d, 0.0);
    if (model.config.field == FieldKind::Sdf) {
      for (int j = 0; j + 1 < d; ++j) alphas[j] = sdf_to_alpha(s[j], s[j + 1], w);
    } else {
      for (int j = 0; j < d; ++j) {
        const double delta = j + 1 < d ? samples.t_values[j + 1] - samples.t_values[j] : (ray.t_far - ray.t_near) / d;
        alphas[j] = density_to_alpha(s[j], delta).alpha;
      }
    }
    const RenderResult r = render_ray(samples, alphas, colors);
    result.colors.push_back(r.color);
    result.depths.push_back(r.depth);
    all_weights.push_back(r.weights);
    all_samples.push_back(std::move(samples));
  }
  result.parts.rgb = rgb_loss(result.colors, batch);
  result.parts.depth = depth_loss(result.depths, batch);
  if (weights.reproj > 0.0) result.parts.reproj = reprojection_loss(all_samples, all_weights, batch);
  result.loss = total_loss(result.parts, weights);
  double sq = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.gt_color[i]) sq += (result.colors[i] - *batch.gt_color[i]).squaredNorm() / 3.0;
  }
  const auto n_color = batch.color_count();
  result.color_mse = n_color > 0 ? sq / n_color : 0.0;
  return result;
}

}  // namespace nerp::reference
