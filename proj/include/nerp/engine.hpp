#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nerp/conditioning.hpp"
#include "nerp/errors.hpp"
#include "nerp/kernel.hpp"
#include "nerp/model.hpp"
#include "nerp/objectives.hpp"
#include "nerp/param_tape.hpp"
#include "nerp/sampling.hpp"
#include "nerp/synthkit.hpp"

namespace nerp {

struct OptimSettings {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct OptimState {
  std::int64_t step = 0;
  OptimSettings settings;
  std::vector<double> m;
  std::vector<double> v;
};

OptimState make_optim_state(const ParamTape& tape, const OptimSettings& settings);

// Decoupled weight decay followed by the bias-corrected adaptive-moment update.
void optim_step(ParamTape& tape, OptimState& state);

// Images, cameras and supervision derived from a scene.
struct TrainingData {
  SyntheticScene scene;
  std::vector<Camera> train_cameras;
  std::vector<Image> train_images;
  std::vector<Image> train_depths;
  std::shared_ptr<const std::vector<SourceView>> sources;
  std::vector<LidarReturn> lidar;
};

TrainingData prepare_training_data(const SyntheticScene& scene, int lidar_rays, std::uint64_t seed);

// A fixed ray batch together with its sample depths.
struct SampledBatch {
  RayBatch batch;
  std::vector<double> t_values;
  int samples_per_ray = 0;
};

// Camera rays and LiDAR rays mixed 4:1. Sample depths are stratified.
SampledBatch sample_batch(const TrainingData& data, int batch_size, int samples_per_ray, RngState& rng);

// Loss of the full pipeline (backbone -> conditioning -> heads -> rendering -> losses).
BatchResult forward(const FieldModel& model, const ParamTape& tape, const TrainingData& data,
                    const SampledBatch& sampled, const LossWeights& weights);

// As forward(), and accumulates dLoss/dParams into tape.grads(). Throws
// NumericFault naming the offending term when the loss is not finite.
BatchResult forward_backward(const FieldModel& model, ParamTape& tape, const TrainingData& data,
                             const SampledBatch& sampled, const LossWeights& weights);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences against analytic gradients. `loss` evaluates the loss at
// the tape's current values; `analytic` holds the gradient at those values.
// Relative error denominator: max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const std::function<double(const ParamTape&)>& loss, ParamTape& tape,
                           std::span<const double> analytic, std::span<const std::size_t> indices, double eps = 1e-5);

struct TrainConfig {
  std::uint64_t seed = 0;
  int samples_per_ray = 64;
  int batch_size = 1024;
  int steps = 1000;
  int log_every = 50;
  int lidar_rays = 2048;
  LossWeights weights;
  OptimSettings optim;
};

struct TrainState {
  FieldModel model;
  ParamTape tape;
  OptimState optim;
  RngState rng;
  std::int64_t step = 0;
};

TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& config);

struct MetricsRecord {
  std::int64_t step = 0;
  double total = 0.0;
  LossParts parts;
  double psnr_train = 0.0;
};

std::string format_metrics(const MetricsRecord& r);
inline const char* metrics_header() { return "step,total,rgb,depth,reproj,psnr_train"; }

// Runs `steps` optimizer steps, reporting a record every `log_every` steps and at the end.
void train(TrainState& state, const TrainingData& data, const TrainConfig& config, int steps,
           const std::function<void(const MetricsRecord&)>& on_metrics = {});

// Renders a full camera view: color image and depth map (regular sampling).
struct RenderedView {
  Image color;
  Image depth;
};

RenderedView render_view(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                         const Camera& camera, int samples_per_ray, RayRange range = {});

// Feature map of the train views together with the conditioning built on it.
struct Conditioning {
  std::shared_ptr<const FeatureMap> features;
  ConditioningContext ctx;
};

Conditioning condition_on(const FieldModel& model, const ParamTape& tape, const TrainingData& data);

struct ViewMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  DepthMetrics depth;
};

// Image metrics plus depth metrics over every pixel, capped at `depth_cap`.
ViewMetrics compare_view(const RenderedView& pred, const ReferenceView& gt, double depth_cap);

struct SplitReport {
  std::vector<ViewMetrics> views;
  ViewMetrics mean;  // arithmetic mean over views of every field
};

SplitReport summarize(std::vector<ViewMetrics> views);

// Renders every camera of `role` with regular sampling and compares it with the oracle.
SplitReport evaluate_split(const FieldModel& model, const ParamTape& tape, const TrainingData& data, CameraRole role,
                           int samples_per_ray);

}  // namespace nerp
