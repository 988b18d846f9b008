#include "nerp/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nerp/nn.hpp"

namespace nerp {
namespace {

using nn::RowMatrix;

struct MlpState {
  std::vector<RowMatrix> pre;  // per layer pre-activation
  std::vector<RowMatrix> act;  // per layer input (act[0] = network input)
};

void mlp_forward(const std::vector<DenseSlot>& layers, const ParamTape& tape, RowMatrix input, MlpState& st) {
  st.pre.resize(layers.size());
  st.act.resize(layers.size());
  st.act[0] = std::move(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    nn::dense_forward(st.act[l], tape.value(layers[l].weight).data(), tape.value(layers[l].bias).data(),
                      layers[l].out, st.pre[l]);
    if (l + 1 < layers.size()) nn::softplus_forward(st.pre[l], st.act[l + 1]);
  }
}

// Returns dLoss/dInput.
RowMatrix mlp_backward(const std::vector<DenseSlot>& layers, const ParamTape& tape, const MlpState& st,
                       RowMatrix d_out, std::span<double> grads) {
  const auto& slots = tape.slots();
  for (std::size_t l = layers.size(); l-- > 0;) {
    RowMatrix d_in;
    nn::dense_backward(st.act[l], d_out, tape.value(layers[l].weight).data(),
                       grads.data() + slots[layers[l].weight].offset, grads.data() + slots[layers[l].bias].offset,
                       &d_in);
    if (l > 0) nn::softplus_backward(st.pre[l - 1], d_in);
    d_out = std::move(d_in);
  }
  return d_out;
}

struct ChunkOutput {
  AlignedBuffer grads;
  AlignedBuffer d_value_maps;
  LossParts parts;  // already divided by the batch-wide counts
  double sq_color = 0.0;
};

struct ChunkRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<ChunkRange> make_chunks(std::size_t rays, int chunk_rays) {
  std::vector<ChunkRange> chunks;
  const std::size_t step = static_cast<std::size_t>(std::max(chunk_rays, 1));
  for (std::size_t b = 0; b < rays; b += step) chunks.push_back({b, std::min(rays, b + step)});
  return chunks;
}

// Shared forward state for one chunk of rays.
struct ChunkForward {
  int rays = 0;
  int samples = 0;
  std::vector<Vec3> points;
  EmbeddingBatch embedding;
  MlpState sdf;
  MlpState rgb;
  std::vector<Color> sample_colors;  // n
  std::vector<double> alphas;        // n
  std::vector<RenderResult> renders; // per ray
};

void chunk_forward(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                   std::span<const Ray> rays, std::span<const double> t_values, int d, ChunkForward& f) {
  const int r = static_cast<int>(rays.size());
  const int n = r * d;
  const int c = model.channels();
  const int e = model.position_dim();
  const int ed = model.direction_dim();
  f.rays = r;
  f.samples = d;
  f.points.resize(n);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < d; ++j) f.points[i * d + j] = rays[i].at(t_values[i * d + j]);
  }
  embed_points(model, tape, ctx, f.points, f.embedding);

  RowMatrix sdf_in(n, c + e);
  sdf_in.leftCols(c) = f.embedding.z;
  sdf_in.rightCols(e) = f.embedding.encoded;
  mlp_forward(model.sdf_mlp, tape, std::move(sdf_in), f.sdf);

  RowMatrix rgb_in(n, c + ed);
  rgb_in.leftCols(c) = f.embedding.z;
  std::vector<double> dir_enc(ed);
  for (int i = 0; i < r; ++i) {
    positional_encode(rays[i].direction, model.config.direction_encoding, dir_enc);
    for (int j = 0; j < d; ++j) {
      std::copy(dir_enc.begin(), dir_enc.end(), rgb_in.row(i * d + j).data() + c);
    }
  }
  mlp_forward(model.rgb_mlp, tape, std::move(rgb_in), f.rgb);

  f.sample_colors.resize(n);
  const RowMatrix& logits = f.rgb.pre.back();
  for (int k = 0; k < n; ++k) {
    f.sample_colors[k] = Color(nn::sigmoid(logits(k, 0)), nn::sigmoid(logits(k, 1)), nn::sigmoid(logits(k, 2)));
  }

  const RowMatrix& raw = f.sdf.pre.back();
  const double w = omega(model, tape);
  f.alphas.assign(n, 0.0);
  f.renders.resize(r);
  for (int i = 0; i < r; ++i) {
    const double* t = t_values.data() + i * d;
    double* a = f.alphas.data() + i * d;
    if (model.config.field == FieldKind::Sdf) {
      for (int j = 0; j + 1 < d; ++j) a[j] = sdf_to_alpha(raw(i * d + j, 0), raw(i * d + j + 1, 0), w);
    } else {
      const double bin = (rays[i].t_far - rays[i].t_near) / d;
      for (int j = 0; j < d; ++j) {
        const double delta = j + 1 < d ? t[j + 1] - t[j] : bin;
        a[j] = density_to_alpha(raw(i * d + j, 0), delta).alpha;
      }
    }
    f.renders[i] = render_ray(std::span<const double>(t, d), std::span<const double>(a, d),
                              std::span<const Color>(f.sample_colors.data() + i * d, d));
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

RayRender render_rays(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                      std::span<const Ray> rays, std::span<const double> t_values, int samples_per_ray,
                      bool keep_embeddings, KernelOptions options) {
  const int d = samples_per_ray;
  if (t_values.size() != rays.size() * static_cast<std::size_t>(d)) {
    throw std::domain_error("render_rays: t_values size mismatch");
  }
  RayRender out;
  out.colors.resize(rays.size());
  out.depths.resize(rays.size());
  out.opacity.resize(rays.size());
  const int c = model.channels();
  if (keep_embeddings) out.embeddings.resize(rays.size() * d * c);
  const auto chunks = make_chunks(rays.size(), options.chunk_rays);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    const auto [b, e] = chunks[ci];
    ChunkForward f;
    chunk_forward(model, tape, ctx, rays.subspan(b, e - b), t_values.subspan(b * d, (e - b) * d), d, f);
    for (std::size_t i = b; i < e; ++i) {
      const auto& rr = f.renders[i - b];
      out.colors[i] = rr.color;
      out.depths[i] = rr.depth;
      out.opacity[i] = rr.opacity_sum;
    }
    if (keep_embeddings) {
      std::copy_n(f.embedding.z.data(), f.embedding.z.size(), out.embeddings.data() + b * d * c);
    }
  }
  return out;
}

BatchResult evaluate_batch(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           const RayBatch& batch, std::span<const double> t_values, int samples_per_ray,
                           const LossWeights& weights, std::span<double> grads, std::span<double> d_value_maps,
                           KernelOptions options) {
  batch.validate();
  const int d = samples_per_ray;
  if (t_values.size() != batch.size() * static_cast<std::size_t>(d)) {
    throw std::domain_error("evaluate_batch: t_values size mismatch");
  }
  const bool need_reproj = weights.reproj > 0.0;
  if (need_reproj && (!batch.source_views || batch.source_views->empty())) {
    throw std::domain_error("evaluate_batch: reprojection needs at least one source view");
  }
  const bool backward = !grads.empty();
  const double n_color = static_cast<double>(batch.color_count());
  const double n_depth = static_cast<double>(batch.depth_count());
  const int c = model.channels();
  const auto& slots = tape.slots();
  const double w_omega = omega(model, tape);
  const std::span<const Ray> all_rays(batch.rays);

  BatchResult result;
  result.colors.resize(batch.size());
  result.depths.resize(batch.size());
  const auto chunks = make_chunks(batch.size(), options.chunk_rays);
  std::vector<ChunkOutput> outputs(chunks.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    const auto [b, e] = chunks[ci];
    const int r = static_cast<int>(e - b);
    const int n = r * d;
    ChunkOutput& co = outputs[ci];
    ChunkForward f;
    const auto t_chunk = t_values.subspan(b * d, static_cast<std::size_t>(n));
    chunk_forward(model, tape, ctx, all_rays.subspan(b, r), t_chunk, d, f);

    // Per-sample reprojection errors (fixed w.r.t. the parameters).
    std::vector<double> reproj_err;
    if (need_reproj) {
      reproj_err.assign(n, 0.0);
      for (int i = 0; i < r; ++i) {
        const auto& target = batch.gt_color[b + i];
        if (!target) continue;
        for (int j = 0; j < d; ++j) {
          reproj_err[i * d + j] = reprojection_error(f.points[i * d + j], *target, *batch.source_views);
        }
      }
    }

    std::vector<Color> d_ray_color(r, Color::Zero());
    std::vector<double> d_ray_depth(r, 0.0);
    for (int i = 0; i < r; ++i) {
      const auto& rr = f.renders[i];
      result.colors[b + i] = rr.color;
      result.depths[b + i] = rr.depth;
      if (const auto& gt = batch.gt_color[b + i]) {
        const Color diff = rr.color - *gt;
        co.parts.rgb += diff.cwiseAbs().sum() / 3.0 / n_color;
        co.sq_color += diff.squaredNorm() / 3.0;
        for (int k = 0; k < 3; ++k) d_ray_color[i][k] = weights.rgb * sign(diff[k]) / (3.0 * n_color);
        if (need_reproj) {
          double acc = 0.0;
          for (int j = 0; j < d; ++j) acc += rr.weights[j] * reproj_err[i * d + j];
          co.parts.reproj += acc / n_color;
        }
      }
      if (const auto& gt = batch.gt_depth[b + i]) {
        const double diff = rr.depth - *gt;
        co.parts.depth += std::abs(diff) / n_depth;
        d_ray_depth[i] = weights.depth * sign(diff) / n_depth;
      }
    }
    if (!backward) continue;

    co.grads.assign(tape.size(), 0.0);
    co.d_value_maps.assign(ctx.value_maps.size(), 0.0);
    RowMatrix d_logits(n, 3);
    RowMatrix d_raw = RowMatrix::Zero(n, 1);
    double d_omega = 0.0;
    std::vector<double> d_w_extra(d, 0.0);
    for (int i = 0; i < r; ++i) {
      const double* t = t_chunk.data() + i * d;
      const double* a = f.alphas.data() + i * d;
      const Color* col = f.sample_colors.data() + i * d;
      std::span<const double> extra;
      if (need_reproj && batch.gt_color[b + i]) {
        for (int j = 0; j < d; ++j) d_w_extra[j] = weights.reproj * reproj_err[i * d + j] / n_color;
        extra = d_w_extra;
      }
      const RenderGrad g = render_ray_backward(std::span<const double>(t, d), std::span<const double>(a, d),
                                               std::span<const Color>(col, d), f.renders[i], d_ray_color[i],
                                               d_ray_depth[i], extra);
      for (int j = 0; j < d; ++j) {
        const int k = i * d + j;
        for (int ch = 0; ch < 3; ++ch) d_logits(k, ch) = g.d_color[j][ch] * col[j][ch] * (1.0 - col[j][ch]);
      }
      const auto& raw = f.sdf.pre.back();
      if (model.config.field == FieldKind::Sdf) {
        for (int j = 0; j + 1 < d; ++j) {
          if (g.d_alpha[j] == 0.0) continue;
          const int k = i * d + j;
          const AlphaGrad ag = sdf_to_alpha_grad(raw(k, 0), raw(k + 1, 0), w_omega);
          d_raw(k, 0) += g.d_alpha[j] * ag.d_s;
          d_raw(k + 1, 0) += g.d_alpha[j] * ag.d_next;
          d_omega += g.d_alpha[j] * ag.d_omega;
        }
      } else {
        const double bin = (all_rays[b + i].t_far - all_rays[b + i].t_near) / d;
        for (int j = 0; j < d; ++j) {
          const int k = i * d + j;
          const double delta = j + 1 < d ? t[j + 1] - t[j] : bin;
          d_raw(k, 0) += g.d_alpha[j] * density_to_alpha(raw(k, 0), delta).d_raw;
        }
      }
    }
    co.grads[slots[model.log_omega].offset] += d_omega * w_omega;

    const RowMatrix d_rgb_in = mlp_backward(model.rgb_mlp, tape, f.rgb, std::move(d_logits), co.grads);
    const RowMatrix d_sdf_in = mlp_backward(model.sdf_mlp, tape, f.sdf, std::move(d_raw), co.grads);
    RowMatrix d_z = d_rgb_in.leftCols(c) + d_sdf_in.leftCols(c);
    embed_points_backward(model, tape, ctx, f.embedding, d_z, co.grads, co.d_value_maps);
  }

  double sq_color = 0.0;
  for (const auto& co : outputs) {
    result.parts.rgb += co.parts.rgb;
    result.parts.depth += co.parts.depth;
    result.parts.reproj += co.parts.reproj;
    sq_color += co.sq_color;
    if (backward) {
      for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += co.grads[k];
      for (std::size_t k = 0; k < d_value_maps.size(); ++k) d_value_maps[k] += co.d_value_maps[k];
    }
  }
  result.loss = total_loss(result.parts, weights);
  result.color_mse = n_color > 0 ? sq_color / n_color : 0.0;
  return result;
}

std::vector<double> embed_many(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                               std::span<const Vec3> points, int chunk) {
  const int c = model.channels();
  std::vector<double> out(points.size() * c);
  const std::size_t step = static_cast<std::size_t>(std::max(chunk, 1));
  const std::size_t chunks = (points.size() + step - 1) / step;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    const std::size_t b = ci * step;
    const std::size_t e = std::min(points.size(), b + step);
    EmbeddingBatch batch;
    embed_points(model, tape, ctx, points.subspan(b, e - b), batch);
    std::copy_n(batch.z.data(), batch.z.size(), out.data() + b * c);
  }
  return out;
}

}  // namespace nerp
