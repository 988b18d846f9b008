#pragma once

#include <span>
#include <vector>

#include "nerp/conditioning.hpp"
#include "nerp/model.hpp"
#include "nerp/objectives.hpp"
#include "nerp/radiance.hpp"

namespace nerp {

// Rays are processed in fixed-size chunks. Chunks run in parallel and their
// partial sums are reduced in chunk order, so results do not depend on the
// number of threads.
struct KernelOptions {
  int chunk_rays = 16;
};

struct RayRender {
  std::vector<Color> colors;
  std::vector<double> depths;
  std::vector<double> opacity;
  std::vector<double> embeddings;  // (ray, sample, C), only when requested
};

// Forward-only rendering. `t_values` holds `samples_per_ray` ascending depths per ray.
RayRender render_rays(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                      std::span<const Ray> rays, std::span<const double> t_values, int samples_per_ray,
                      bool keep_embeddings = false, KernelOptions options = {});

struct BatchResult {
  LossParts parts;
  double loss = 0.0;
  std::vector<Color> colors;
  std::vector<double> depths;
  double color_mse = 0.0;  // mean squared color error over rays with a color target
};

// Loss of the batch; when `grads` is non-empty, also accumulates dLoss/dParams
// into `grads` (except backbone and W_s, which flow through `d_value_maps`).
BatchResult evaluate_batch(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                           const RayBatch& batch, std::span<const double> t_values, int samples_per_ray,
                           const LossWeights& weights, std::span<double> grads, std::span<double> d_value_maps,
                           KernelOptions options = {});

// Embeddings for arbitrary points, in parallel chunks. Returns (point, C).
std::vector<double> embed_many(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                               std::span<const Vec3> points, int chunk = 1024);

}  // namespace nerp
