#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "nerp/engine.hpp"
#include "nerp/model.hpp"
#include "nerp/synthkit.hpp"

namespace nerp {

struct RunConfig {
  std::string scene;
  std::uint64_t seed = 0;
  int samples_per_ray = 64;
  int batch_size = 1024;
  int steps = 1000;
  int log_every = 50;
  int lidar_rays = 2048;
  LossWeights loss_weights;
  OptimSettings optimizer;
  int encoder_channels = 32;
  int encoder_stride = 4;
  int attention_heads = 4;
  int attention_points = 4;
  int encoding_bands = 6;
  double contraction_alpha = 0.8;
  bool contraction = true;
  FieldKind field = FieldKind::Sdf;
  std::string out = "run";

  // Throws InputFault on non-positive counts or empty paths.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Model layout for a scene: ROI from the scene, everything else from the config.
ModelConfig make_model_config(const RunConfig& config, const SyntheticScene& scene);
TrainConfig make_train_config(const RunConfig& config);

}  // namespace nerp
