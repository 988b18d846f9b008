#include "nerp/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nerp {
namespace {

using nn::ConstRowMap;
using nn::RowMap;
using nn::RowMatrix;

int conv_out_size(int in, const ConvLayerSpec& l) { return (in + 2 * (l.kernel / 2) - l.kernel) / l.stride + 1; }

void im2col(const double* input, int height, int width, const ConvLayerSpec& l, int out_h, int out_w,
            RowMatrix& cols) {
  const int pad = l.kernel / 2;
  cols.setZero(static_cast<Eigen::Index>(out_h) * out_w, l.kernel * l.kernel * l.in);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double* row = cols.data() + (static_cast<std::size_t>(oy) * out_w + ox) * cols.cols();
      for (int ky = 0; ky < l.kernel; ++ky) {
        const int iy = oy * l.stride + ky - pad;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < l.kernel; ++kx) {
          const int ix = ox * l.stride + kx - pad;
          if (ix < 0 || ix >= width) continue;
          const double* src = input + (static_cast<std::size_t>(iy) * width + ix) * l.in;
          std::copy(src, src + l.in, row + (ky * l.kernel + kx) * l.in);
        }
      }
    }
  }
}

void col2im(const RowMatrix& d_cols, int height, int width, const ConvLayerSpec& l, int out_h, int out_w,
            double* d_input) {
  const int pad = l.kernel / 2;
  std::fill(d_input, d_input + static_cast<std::size_t>(height) * width * l.in, 0.0);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const double* row = d_cols.data() + (static_cast<std::size_t>(oy) * out_w + ox) * d_cols.cols();
      for (int ky = 0; ky < l.kernel; ++ky) {
        const int iy = oy * l.stride + ky - pad;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < l.kernel; ++kx) {
          const int ix = ox * l.stride + kx - pad;
          if (ix < 0 || ix >= width) continue;
          double* dst = d_input + (static_cast<std::size_t>(iy) * width + ix) * l.in;
          const double* src = row + (ky * l.kernel + kx) * l.in;
          for (int c = 0; c < l.in; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

FeatureMap extract_features(const FieldModel& model, const ParamTape& tape, std::span<const Image> images,
                            std::span<const Camera> cameras, BackboneCache* cache) {
  if (images.empty()) throw std::domain_error("extract_features needs at least one view");
  if (images.size() != cameras.size()) throw std::domain_error("extract_features: one camera per view required");
  const int h0 = images[0].height;
  const int w0 = images[0].width;
  for (const auto& img : images) {
    if (img.height != h0 || img.width != w0 || img.channels != 3) {
      throw std::domain_error("extract_features: views must share one H x W x 3 shape");
    }
  }
  const int views = static_cast<int>(images.size());
  if (cache != nullptr) {
    cache->layers.assign(model.backbone.size(), {});
  }

  std::vector<RowMatrix> activations(views);
  int height = h0;
  int width = w0;
  for (std::size_t li = 0; li < model.backbone.size(); ++li) {
    const ConvSlot& conv = model.backbone[li];
    const ConvLayerSpec& l = conv.spec;
    const int out_h = conv_out_size(height, l);
    const int out_w = conv_out_size(width, l);
    ConstRowMap weight(tape.value(conv.weight).data(), l.kernel * l.kernel * l.in, l.out);
    nn::ConstVecMap bias(tape.value(conv.bias).data(), l.out);
    BackboneCache::Layer* layer_cache = cache != nullptr ? &cache->layers[li] : nullptr;
    if (layer_cache != nullptr) {
      layer_cache->in_height = height;
      layer_cache->in_width = width;
      layer_cache->out_height = out_h;
      layer_cache->out_width = out_w;
      layer_cache->columns.resize(views);
      layer_cache->pre.resize(views);
    }
    for (int v = 0; v < views; ++v) {
      const double* input = li == 0 ? images[v].data.data() : activations[v].data();
      RowMatrix cols;
      im2col(input, height, width, l, out_h, out_w, cols);
      RowMatrix pre = cols * weight;
      pre.rowwise() += bias;
      if (l.activation) {
        nn::softplus_forward(pre, activations[v]);
      } else {
        activations[v] = pre;
      }
      if (layer_cache != nullptr) {
        layer_cache->columns[v] = std::move(cols);
        layer_cache->pre[v] = std::move(pre);
      }
    }
    height = out_h;
    width = out_w;
  }

  FeatureMap fm;
  fm.num_views = views;
  fm.height = height;
  fm.width = width;
  fm.channels = model.channels();
  fm.stride = model.config.stride();
  fm.values.resize(static_cast<std::size_t>(views) * fm.view_size());
  for (int v = 0; v < views; ++v) std::copy_n(activations[v].data(), fm.view_size(), fm.view(v));
  fm.cameras.assign(cameras.begin(), cameras.end());
  return fm;
}

void backward_features(const FieldModel& model, const ParamTape& tape, const BackboneCache& cache,
                       std::span<const double> d_features, std::span<double> grads) {
  const std::size_t layers = model.backbone.size();
  if (cache.layers.size() != layers) throw std::invalid_argument("backward_features: cache does not match model");
  const int views = static_cast<int>(cache.layers.back().pre.size());
  const auto& last = cache.layers.back();
  const std::size_t view_size = static_cast<std::size_t>(last.out_height) * last.out_width * model.channels();

  for (int v = 0; v < views; ++v) {
    RowMatrix d_out = ConstRowMap(d_features.data() + v * view_size,
                                  static_cast<Eigen::Index>(last.out_height) * last.out_width, model.channels());
    for (std::size_t li = layers; li-- > 0;) {
      const ConvSlot& conv = model.backbone[li];
      const ConvLayerSpec& l = conv.spec;
      const auto& lc = cache.layers[li];
      if (l.activation) nn::softplus_backward(lc.pre[v], d_out);
      const auto& slots = tape.slots();
      RowMatrix d_cols;
      nn::dense_backward(lc.columns[v], d_out, tape.value(conv.weight).data(),
                         grads.data() + slots[conv.weight].offset, grads.data() + slots[conv.bias].offset,
                         li > 0 ? &d_cols : nullptr);
      if (li == 0) break;
      RowMatrix d_in(static_cast<Eigen::Index>(lc.in_height) * lc.in_width, l.in);
      col2im(d_cols, lc.in_height, lc.in_width, l, lc.out_height, lc.out_width, d_in.data());
      d_out = std::move(d_in);
    }
  }
}

void bilinear_lookup(const double* grid, int height, int width, int channels, double u, double v, double* out,
                     double* d_u, double* d_v) {
  std::fill(out, out + channels, 0.0);
  if (d_u != nullptr) std::fill(d_u, d_u + channels, 0.0);
  if (d_v != nullptr) std::fill(d_v, d_v + channels, 0.0);
  if (!(u > -1.0 && u < width && v > -1.0 && v < height)) return;
  const double fu0 = std::floor(u);
  const double fv0 = std::floor(v);
  const int i0 = static_cast<int>(fu0);
  const int j0 = static_cast<int>(fv0);
  const double fu = u - fu0;
  const double fv = v - fv0;
  const double w[4] = {(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv};
  const double wu[4] = {-(1.0 - fv), 1.0 - fv, -fv, fv};
  const double wv[4] = {-(1.0 - fu), -fu, 1.0 - fu, fu};
  const int ci[4] = {i0, i0 + 1, i0, i0 + 1};
  const int cj[4] = {j0, j0, j0 + 1, j0 + 1};
  if (channels == 8 && i0 >= 0 && j0 >= 0 && i0 + 1 < width && j0 + 1 < height) {
    const double* c00 = grid + (static_cast<std::size_t>(j0) * width + i0) * 8;
    const double* c10 = c00 + 8;
    const double* c01 = c00 + static_cast<std::size_t>(width) * 8;
    const double* c11 = c01 + 8;
    for (int c = 0; c < 8; ++c) out[c] = w[0] * c00[c] + w[1] * c10[c] + w[2] * c01[c] + w[3] * c11[c];
    if (d_u != nullptr) {
      for (int c = 0; c < 8; ++c) d_u[c] = wu[0] * c00[c] + wu[1] * c10[c] + wu[2] * c01[c] + wu[3] * c11[c];
    }
    if (d_v != nullptr) {
      for (int c = 0; c < 8; ++c) d_v[c] = wv[0] * c00[c] + wv[1] * c10[c] + wv[2] * c01[c] + wv[3] * c11[c];
    }
    return;
  }
  for (int k = 0; k < 4; ++k) {
    if (ci[k] < 0 || ci[k] >= width || cj[k] < 0 || cj[k] >= height) continue;
    const double* cell = grid + (static_cast<std::size_t>(cj[k]) * width + ci[k]) * channels;
    for (int c = 0; c < channels; ++c) out[c] += w[k] * cell[c];
    if (d_u != nullptr) {
      for (int c = 0; c < channels; ++c) d_u[c] += wu[k] * cell[c];
    }
    if (d_v != nullptr) {
      for (int c = 0; c < channels; ++c) d_v[c] += wv[k] * cell[c];
    }
  }
}

std::vector<double> bilinear_sample(const FeatureMap& fm, int view, double u, double v) {
  if (view < 0 || view >= fm.num_views) throw std::out_of_range("bilinear_sample: view index out of range");
  std::vector<double> out(fm.channels);
  bilinear_lookup(fm.view(view), fm.height, fm.width, fm.channels, u, v, out.data());
  return out;
}

ConditioningContext build_conditioning(const FieldModel& model, const ParamTape& tape, const FeatureMap& fm) {
  if (fm.channels != model.channels()) throw std::invalid_argument("feature map channel count does not match model");
  ConditioningContext ctx;
  ctx.features = &fm;
  ctx.num_points = model.num_points();
  ctx.head_dim = model.head_dim();
  const Eigen::Index cells = static_cast<Eigen::Index>(fm.height) * fm.width;
  const std::size_t map_size = static_cast<std::size_t>(cells) * ctx.head_dim;
  ctx.value_maps.resize(static_cast<std::size_t>(fm.num_views) * ctx.num_points * map_size);
  const double* proj = tape.value(model.value_proj).data();
  for (int v = 0; v < fm.num_views; ++v) {
    ConstRowMap features(fm.view(v), cells, fm.channels);
    for (int s = 0; s < ctx.num_points; ++s) {
      ConstRowMap w(proj + static_cast<std::size_t>(s) * fm.channels * ctx.head_dim, fm.channels, ctx.head_dim);
      RowMap g(ctx.value_maps.data() + (static_cast<std::size_t>(v) * ctx.num_points + s) * map_size, cells,
               ctx.head_dim);
      g.noalias() = features * w;
    }
  }
  return ctx;
}

void backward_conditioning(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           std::span<const double> d_value_maps, std::span<double> grads,
                           std::span<double> d_features) {
  const FeatureMap& fm = *ctx.features;
  const Eigen::Index cells = static_cast<Eigen::Index>(fm.height) * fm.width;
  const std::size_t map_size = static_cast<std::size_t>(cells) * ctx.head_dim;
  const double* proj = tape.value(model.value_proj).data();
  double* d_proj = grads.data() + tape.slots()[model.value_proj].offset;
  std::fill(d_features.begin(), d_features.end(), 0.0);
  for (int v = 0; v < fm.num_views; ++v) {
    ConstRowMap features(fm.view(v), cells, fm.channels);
    RowMap d_feat(d_features.data() + v * fm.view_size(), cells, fm.channels);
    for (int s = 0; s < ctx.num_points; ++s) {
      const std::size_t w_off = static_cast<std::size_t>(s) * fm.channels * ctx.head_dim;
      ConstRowMap w(proj + w_off, fm.channels, ctx.head_dim);
      RowMap dw(d_proj + w_off, fm.channels, ctx.head_dim);
      ConstRowMap dg(d_value_maps.data() + (static_cast<std::size_t>(v) * ctx.num_points + s) * map_size, cells,
                     ctx.head_dim);
      dw.noalias() += features.transpose() * dg;
      d_feat.noalias() += dg * w.transpose();
    }
  }
}

void embed_points(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                  std::span<const Vec3> points, EmbeddingBatch& out) {
  const FeatureMap& fm = *ctx.features;
  const int n = static_cast<int>(points.size());
  const int e = model.position_dim();
  const int nh = model.num_heads();
  const int ns = model.num_points();
  const int dh = model.head_dim();
  const int c = model.channels();
  const int hidden = model.config.attention.hidden;
  const int n_off = nh * ns * 2;
  const int n_att = nh * ns;

  out.count = n;
  out.encoded.resize(n, e);
  out.offset_pre.resize(n, hidden);
  out.offset_hidden.resize(n, hidden);
  out.offsets.resize(n, n_off);
  out.attn_pre.resize(n, hidden);
  out.attn_hidden.resize(n, hidden);
  out.attention.resize(n, n_att);
  out.mean_values.setZero(n, n_att * dh);
  out.head_values.setZero(n, nh * dh);
  out.z.setZero(n, c);
  out.hit_begin.assign(n + 1, 0);
  out.hits.clear();

  const auto off0 = model.offset_net[0];
  const auto off1 = model.offset_net[1];
  const auto att0 = model.attn_net[0];
  const auto att1 = model.attn_net[1];
  const double* w_off0 = tape.value(off0.weight).data();
  const double* b_off0 = tape.value(off0.bias).data();
  const double* w_off1 = tape.value(off1.weight).data();
  const double* b_off1 = tape.value(off1.bias).data();
  const double* w_att0 = tape.value(att0.weight).data();
  const double* b_att0 = tape.value(att0.bias).data();
  const double* w_att1 = tape.value(att1.weight).data();
  const double* b_att1 = tape.value(att1.bias).data();
  const double* w_head = tape.value(model.head_out).data();
  std::vector<double> lookup(dh);

  for (int i = 0; i < n; ++i) {
    const Vec3& x = points[i];
    double* enc = out.encoded.row(i).data();
    positional_encode(contract(x, model.config.contraction), model.config.position_encoding,
                      std::span<double>(enc, e));

    double* opre = out.offset_pre.row(i).data();
    double* ohid = out.offset_hidden.row(i).data();
    nn::affine({enc, static_cast<std::size_t>(e)}, w_off0, b_off0, hidden, opre);
    nn::softplus_array(opre, ohid, hidden);
    double* offs = out.offsets.row(i).data();
    nn::affine({ohid, static_cast<std::size_t>(hidden)}, w_off1, b_off1, n_off, offs);

    double* apre = out.attn_pre.row(i).data();
    double* ahid = out.attn_hidden.row(i).data();
    nn::affine({enc, static_cast<std::size_t>(e)}, w_att0, b_att0, hidden, apre);
    nn::softplus_array(apre, ahid, hidden);
    double* attn = out.attention.row(i).data();
    nn::affine({ahid, static_cast<std::size_t>(hidden)}, w_att1, b_att1, n_att, attn);
    for (int h = 0; h < nh; ++h) {
      double* a = attn + h * ns;
      const double mx = *std::max_element(a, a + ns);
      double sum = 0.0;
      for (int s = 0; s < ns; ++s) {
        a[s] = std::exp(a[s] - mx);
        sum += a[s];
      }
      for (int s = 0; s < ns; ++s) a[s] /= sum;
    }

    out.hit_begin[i] = static_cast<int>(out.hits.size());
    for (int v = 0; v < fm.num_views; ++v) {
      const Projection p = project(x, fm.cameras[v].intrinsics, fm.cameras[v].pose);
      if (p.valid) out.hits.push_back(ViewHit{v, pixel_to_cell(p.u, fm.stride), pixel_to_cell(p.v, fm.stride)});
    }
    out.hit_begin[i + 1] = static_cast<int>(out.hits.size());
    const int valid = out.valid_views(i);
    if (valid == 0) continue;

    double* mean = out.mean_values.row(i).data();
    for (int hi = out.hit_begin[i]; hi < out.hit_begin[i + 1]; ++hi) {
      const ViewHit& hit = out.hits[hi];
      for (int h = 0; h < nh; ++h) {
        for (int s = 0; s < ns; ++s) {
          const int hs = h * ns + s;
          bilinear_lookup(ctx.value_map(hit.view, s), fm.height, fm.width, dh, hit.u + offs[2 * hs],
                          hit.v + offs[2 * hs + 1], lookup.data());
          double* m = mean + hs * dh;
          for (int d = 0; d < dh; ++d) m[d] += lookup[d];
        }
      }
    }
    const double inv = 1.0 / valid;
    for (int k = 0; k < n_att * dh; ++k) mean[k] *= inv;

    double* head = out.head_values.row(i).data();
    for (int h = 0; h < nh; ++h) {
      for (int s = 0; s < ns; ++s) {
        const double a = attn[h * ns + s];
        const double* m = mean + (h * ns + s) * dh;
        for (int d = 0; d < dh; ++d) head[h * dh + d] += a * m[d];
      }
    }
    double* z = out.z.row(i).data();
    for (int h = 0; h < nh; ++h) {
      for (int d = 0; d < dh; ++d) {
        const double hv = head[h * dh + d];
        const double* row = w_head + (static_cast<std::size_t>(h) * dh + d) * c;
        for (int k = 0; k < c; ++k) z[k] += hv * row[k];
      }
    }
  }
}

void embed_points_backward(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           const EmbeddingBatch& batch, const RowMatrix& d_z, std::span<double> grads,
                           std::span<double> d_value_maps) {
  const FeatureMap& fm = *ctx.features;
  const int n = batch.count;
  const int nh = model.num_heads();
  const int ns = model.num_points();
  const int dh = model.head_dim();
  const int c = model.channels();
  const int n_att = nh * ns;
  const auto& slots = tape.slots();
  const std::size_t map_size = static_cast<std::size_t>(fm.height) * fm.width * dh;

  // z = sum_h head_h W_h
  RowMatrix d_head(n, nh * dh);
  const double* w_head = tape.value(model.head_out).data();
  double* dw_head = grads.data() + slots[model.head_out].offset;
  for (int h = 0; h < nh; ++h) {
    ConstRowMap w(w_head + static_cast<std::size_t>(h) * dh * c, dh, c);
    RowMap dw(dw_head + static_cast<std::size_t>(h) * dh * c, dh, c);
    d_head.middleCols(h * dh, dh).noalias() = d_z * w.transpose();
    dw.noalias() += batch.head_values.middleCols(h * dh, dh).transpose() * d_z;
  }

  RowMatrix d_offsets = RowMatrix::Zero(n, n_att * 2);
  RowMatrix d_logits = RowMatrix::Zero(n, n_att);
  std::vector<double> d_mean(static_cast<std::size_t>(n_att) * dh);
  std::vector<double> d_attn(n_att);

  for (int i = 0; i < n; ++i) {
    const int valid = batch.valid_views(i);
    if (valid == 0) continue;
    const double* attn = batch.attention.row(i).data();
    const double* mean = batch.mean_values.row(i).data();
    const double* dhd = d_head.row(i).data();
    const double* offs = batch.offsets.row(i).data();
    for (int h = 0; h < nh; ++h) {
      for (int s = 0; s < ns; ++s) {
        const int hs = h * ns + s;
        double acc = 0.0;
        for (int d = 0; d < dh; ++d) {
          acc += mean[hs * dh + d] * dhd[h * dh + d];
          d_mean[hs * dh + d] = attn[hs] * dhd[h * dh + d] / valid;
        }
        d_attn[hs] = acc;
      }
      double dot = 0.0;
      for (int s = 0; s < ns; ++s) dot += attn[h * ns + s] * d_attn[h * ns + s];
      for (int s = 0; s < ns; ++s) d_logits(i, h * ns + s) = attn[h * ns + s] * (d_attn[h * ns + s] - dot);
    }

    for (int hi = batch.hit_begin[i]; hi < batch.hit_begin[i + 1]; ++hi) {
      const ViewHit& hit = batch.hits[hi];
      for (int h = 0; h < nh; ++h) {
        for (int s = 0; s < ns; ++s) {
          const int hs = h * ns + s;
          const double u = hit.u + offs[2 * hs];
          const double v = hit.v + offs[2 * hs + 1];
          const double* g = d_mean.data() + hs * dh;
          if (!(u > -1.0 && u < fm.width && v > -1.0 && v < fm.height)) continue;
          const double fu0 = std::floor(u);
          const double fv0 = std::floor(v);
          const int i0 = static_cast<int>(fu0);
          const int j0 = static_cast<int>(fv0);
          const double fu = u - fu0;
          const double fv = v - fv0;
          const double w[4] = {(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv};
          const double wu[4] = {-(1.0 - fv), 1.0 - fv, -fv, fv};
          const double wv[4] = {-(1.0 - fu), -fu, 1.0 - fu, fu};
          const int ci[4] = {i0, i0 + 1, i0, i0 + 1};
          const int cj[4] = {j0, j0, j0 + 1, j0 + 1};
          const double* vmap = ctx.value_map(hit.view, s);
          double* map = d_value_maps.data() + (static_cast<std::size_t>(hit.view) * ns + s) * map_size;
          double gu = 0.0;
          double gv = 0.0;
          for (int k = 0; k < 4; ++k) {
            if (ci[k] < 0 || ci[k] >= fm.width || cj[k] < 0 || cj[k] >= fm.height) continue;
            const std::size_t cell_offset = (static_cast<std::size_t>(cj[k]) * fm.width + ci[k]) * dh;
            const double* value = vmap + cell_offset;
            double* cell = map + cell_offset;
            double dot = 0.0;
            for (int d = 0; d < dh; ++d) {
              dot += value[d] * g[d];
              cell[d] += w[k] * g[d];
            }
            gu += wu[k] * dot;
            gv += wv[k] * dot;
          }
          d_offsets(i, 2 * hs) += gu;
          d_offsets(i, 2 * hs + 1) += gv;
        }
      }
    }
  }

  auto backprop_net = [&](const std::vector<DenseSlot>& net, const RowMatrix& pre, const RowMatrix& hidden_act,
                          const RowMatrix& d_out) {
    RowMatrix d_hidden;
    nn::dense_backward(hidden_act, d_out, tape.value(net[1].weight).data(), grads.data() + slots[net[1].weight].offset,
                       grads.data() + slots[net[1].bias].offset, &d_hidden);
    nn::softplus_backward(pre, d_hidden);
    nn::dense_backward(batch.encoded, d_hidden, tape.value(net[0].weight).data(),
                       grads.data() + slots[net[0].weight].offset, grads.data() + slots[net[0].bias].offset, nullptr);
  };
  backprop_net(model.offset_net, batch.offset_pre, batch.offset_hidden, d_offsets);
  backprop_net(model.attn_net, batch.attn_pre, batch.attn_hidden, d_logits);
}

PointEmbedding embed_point(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           const Vec3& point) {
  EmbeddingBatch batch;
  embed_points(model, tape, ctx, std::span<const Vec3>(&point, 1), batch);
  PointEmbedding out;
  out.point = point;
  out.valid_views = batch.valid_views(0);
  out.z.assign(batch.z.row(0).data(), batch.z.row(0).data() + batch.z.cols());
  return out;
}

}  // namespace nerp
