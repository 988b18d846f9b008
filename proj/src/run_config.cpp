#include "nerp/run_config.hpp"

#include <fstream>
#include <set>

#include "nerp/errors.hpp"

namespace nerp {

using nlohmann::json;

void RunConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw InputFault(std::string("config: '") + name + "' must be positive");
  };
  if (scene.empty()) throw InputFault("config: 'scene' path is empty");
  if (out.empty()) throw InputFault("config: 'out' path is empty");
  positive(samples_per_ray, "samples_per_ray");
  positive(batch_size, "batch_size");
  positive(log_every, "log_every");
  positive(encoder_channels, "encoder_channels");
  positive(encoder_stride, "encoder_stride");
  positive(attention_heads, "attention_heads");
  positive(attention_points, "attention_points");
  positive(encoding_bands, "encoding_bands");
  if (steps < 0) throw InputFault("config: 'steps' must be non-negative");
  if (lidar_rays < 0) throw InputFault("config: 'lidar_rays' must be non-negative");
  if (!(contraction_alpha >= 0.0 && contraction_alpha <= 1.0)) {
    throw InputFault("config: 'contraction_alpha' must lie in [0, 1]");
  }
  if (!(optimizer.lr > 0.0)) throw InputFault("config: optimizer lr must be positive");
  try {
    loss_weights.validate();
  } catch (const std::exception& e) {
    throw InputFault(std::string("config: ") + e.what());
  }
}

json to_json(const RunConfig& c) {
  return {{"scene", c.scene},
          {"seed", c.seed},
          {"samples_per_ray", c.samples_per_ray},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"log_every", c.log_every},
          {"lidar_rays", c.lidar_rays},
          {"loss_weights", {{"rgb", c.loss_weights.rgb}, {"depth", c.loss_weights.depth}, {"reproj", c.loss_weights.reproj}}},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"encoder_channels", c.encoder_channels},
          {"encoder_stride", c.encoder_stride},
          {"attention_heads", c.attention_heads},
          {"attention_points", c.attention_points},
          {"encoding_bands", c.encoding_bands},
          {"contraction_alpha", c.contraction_alpha},
          {"contraction", c.contraction},
          {"field", to_string(c.field)},
          {"out", c.out}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw InputFault("config: unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw InputFault("config: top level must be an object");
  RunConfig c;
  try {
    reject_unknown(j,
                   {"scene", "seed", "samples_per_ray", "batch_size", "steps", "log_every", "lidar_rays",
                    "loss_weights", "optimizer", "encoder_channels", "encoder_stride", "attention_heads",
                    "attention_points", "encoding_bands", "contraction_alpha", "contraction", "field", "out"},
                   "config");
    read(j, "scene", c.scene);
    read(j, "seed", c.seed);
    read(j, "samples_per_ray", c.samples_per_ray);
    read(j, "batch_size", c.batch_size);
    read(j, "steps", c.steps);
    read(j, "log_every", c.log_every);
    read(j, "lidar_rays", c.lidar_rays);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      reject_unknown(w, {"rgb", "depth", "reproj"}, "loss_weights");
      read(w, "rgb", c.loss_weights.rgb);
      read(w, "depth", c.loss_weights.depth);
      read(w, "reproj", c.loss_weights.reproj);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, {"lr", "beta1", "beta2", "epsilon", "weight_decay"}, "optimizer");
      read(o, "lr", c.optimizer.lr);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "epsilon", c.optimizer.epsilon);
      read(o, "weight_decay", c.optimizer.weight_decay);
    }
    read(j, "encoder_channels", c.encoder_channels);
    read(j, "encoder_stride", c.encoder_stride);
    read(j, "attention_heads", c.attention_heads);
    read(j, "attention_points", c.attention_points);
    read(j, "encoding_bands", c.encoding_bands);
    read(j, "contraction_alpha", c.contraction_alpha);
    read(j, "contraction", c.contraction);
    if (j.contains("field")) c.field = field_kind_from_string(j.at("field").get<std::string>());
    read(j, "out", c.out);
  } catch (const json::exception& e) {
    throw InputFault(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputFault(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputFault("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputFault("config file '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

ModelConfig make_model_config(const RunConfig& c, const SyntheticScene& scene) {
  ModelConfig m;
  m.position_encoding.num_bands = c.encoding_bands;
  m.contraction = scene.roi;
  m.contraction.alpha = c.contraction_alpha;
  m.contraction.enabled = c.contraction;
  m.attention.num_heads = c.attention_heads;
  m.attention.num_points = c.attention_points;
  m.field = c.field;
  try {
    m.backbone = default_backbone(c.encoder_channels, c.encoder_stride);
    m.validate();
  } catch (const std::exception& e) {
    throw InputFault(std::string("config: ") + e.what());
  }
  return m;
}

TrainConfig make_train_config(const RunConfig& c) {
  TrainConfig t;
  t.seed = c.seed;
  t.samples_per_ray = c.samples_per_ray;
  t.batch_size = c.batch_size;
  t.steps = c.steps;
  t.log_every = c.log_every;
  t.lidar_rays = c.lidar_rays;
  t.weights = c.loss_weights;
  t.optim = c.optimizer;
  return t;
}

}  // namespace nerp
