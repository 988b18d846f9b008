#pragma once

#include <span>

#include "nerp/conditioning.hpp"
#include "nerp/kernel.hpp"
#include "nerp/objectives.hpp"

// Serial, unbatched reference implementation of the forward pipeline. It reads
// the raw feature map and applies the value projection after each lookup, one
// view at a time, so it shares no arithmetic path with the batched kernel.
namespace nerp::reference {

PointEmbedding embed_point(const FieldModel& model, const ParamTape& tape, const FeatureMap& fm, const Vec3& x);

// Per-head attention weights of a point (heads x points, row-major).
std::vector<double> attention_weights(const FieldModel& model, const ParamTape& tape, const Vec3& x);

BatchResult evaluate_batch(const FieldModel& model, const ParamTape& tape, const FeatureMap& fm,
                           const RayBatch& batch, std::span<const double> t_values, int samples_per_ray,
                           const LossWeights& weights);

}  // namespace nerp::reference
