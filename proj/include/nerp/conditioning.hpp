#pragma once

#include <span>
#include <vector>

#include "nerp/geometry.hpp"
#include "nerp/image.hpp"
#include "nerp/model.hpp"
#include "nerp/nn.hpp"
#include "nerp/param_tape.hpp"

namespace nerp {

// Per-view feature grids (view, row, col, channel) with the cameras that produced them.
struct FeatureMap {
  int num_views = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  int stride = 1;
  AlignedBuffer values;
  std::vector<Camera> cameras;

  std::size_t view_size() const { return static_cast<std::size_t>(height) * width * channels; }
  const double* view(int v) const { return values.data() + v * view_size(); }
  double* view(int v) { return values.data() + v * view_size(); }
};

// Activations kept by extract_features for the backward pass.
struct BackboneCache {
  struct Layer {
    int in_height = 0, in_width = 0, out_height = 0, out_width = 0;
    std::vector<nn::RowMatrix> columns;  // per view, im2col of the layer input
    std::vector<nn::RowMatrix> pre;      // per view, pre-activation output
  };
  std::vector<Layer> layers;
};

FeatureMap extract_features(const FieldModel& model, const ParamTape& tape, std::span<const Image> images,
                            std::span<const Camera> cameras, BackboneCache* cache = nullptr);

// Accumulates backbone gradients into `grads` given dLoss/dFeatures.
void backward_features(const FieldModel& model, const ParamTape& tape, const BackboneCache& cache,
                       std::span<const double> d_features, std::span<double> grads);

// Bilinear lookup on an H x W x C grid in cell coordinates (cell (i, j) centered
// at u = i, v = j). Corners outside the grid read zero. Optional outputs receive
// the derivative of each channel with respect to u and v.
void bilinear_lookup(const double* grid, int height, int width, int channels, double u, double v, double* out,
                     double* d_u = nullptr, double* d_v = nullptr);

std::vector<double> bilinear_sample(const FeatureMap& fm, int view, double u, double v);

// Converts continuous image pixel coordinates into feature-cell coordinates.
inline double pixel_to_cell(double pixel, int stride) { return pixel / stride - 0.5; }

// Feature map plus the per-point value projections W'_s applied to every cell.
struct ConditioningContext {
  const FeatureMap* features = nullptr;
  int num_points = 0;
  int head_dim = 0;
  AlignedBuffer value_maps;  // (view, point s, row, col, head_dim)

  const double* value_map(int view, int s) const {
    return value_maps.data() +
           (static_cast<std::size_t>(view) * num_points + s) * features->height * features->width * head_dim;
  }
};

ConditioningContext build_conditioning(const FieldModel& model, const ParamTape& tape, const FeatureMap& fm);

// Accumulates W'_s gradients into `grads` and writes dLoss/dFeatures.
void backward_conditioning(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           std::span<const double> d_value_maps, std::span<double> grads,
                           std::span<double> d_features);

struct PointEmbedding {
  std::vector<double> z;
  Vec3 point = Vec3::Zero();
  int valid_views = 0;
};

struct ViewHit {
  int view = 0;
  double u = 0.0;  // feature-cell coordinates of the projection
  double v = 0.0;
};

// Forward state of the deformable point conditioning for a batch of points.
struct EmbeddingBatch {
  int count = 0;
  nn::RowMatrix encoded;       // n x position_dim
  nn::RowMatrix offset_pre;    // n x hidden
  nn::RowMatrix offset_hidden; // n x hidden
  nn::RowMatrix offsets;       // n x (heads * points * 2), feature cells
  nn::RowMatrix attn_pre;
  nn::RowMatrix attn_hidden;
  nn::RowMatrix attention;     // n x (heads * points), softmax per head
  nn::RowMatrix mean_values;   // n x (heads * points * head_dim), averaged over valid views
  nn::RowMatrix head_values;   // n x (heads * head_dim)
  nn::RowMatrix z;             // n x C
  std::vector<int> hit_begin;  // n + 1 offsets into hits
  std::vector<ViewHit> hits;

  int valid_views(int i) const { return hit_begin[i + 1] - hit_begin[i]; }
};

// Embeds every point. Each point is evaluated with a fixed operation order, so a
// point's embedding does not depend on the batch it is evaluated in.
void embed_points(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                  std::span<const Vec3> points, EmbeddingBatch& out);

// Accumulates gradients for offset_net, attn_net and W_h into `grads`, and
// dLoss/dValueMaps into `d_value_maps`.
void embed_points_backward(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           const EmbeddingBatch& batch, const nn::RowMatrix& d_z, std::span<double> grads,
                           std::span<double> d_value_maps);

PointEmbedding embed_point(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           const Vec3& point);

}  // namespace nerp
