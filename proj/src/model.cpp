#include "nerp/model.hpp"

#include <cmath>
#include <stdexcept>

namespace nerp {

std::string to_string(FieldKind kind) { return kind == FieldKind::Sdf ? "sdf" : "density"; }

FieldKind field_kind_from_string(const std::string& name) {
  if (name == "sdf") return FieldKind::Sdf;
  if (name == "density") return FieldKind::Density;
  throw std::invalid_argument("unknown field kind '" + name + "'");
}

std::vector<ConvLayerSpec> default_backbone(int channels, int stride) {
  if (stride != 1 && stride != 2 && stride != 4) throw std::invalid_argument("backbone stride must be 1, 2 or 4");
  const int mid = std::max(channels / 2, 1);
  return {
      ConvLayerSpec{3, mid, 3, stride >= 2 ? 2 : 1, true},
      ConvLayerSpec{mid, channels, 3, stride >= 4 ? 2 : 1, true},
      ConvLayerSpec{channels, channels, 1, 1, false},
  };
}

int ModelConfig::stride() const {
  int s = 1;
  for (const auto& layer : backbone) s *= layer.stride;
  return s;
}

void ModelConfig::validate() const {
  if (backbone.empty()) throw std::invalid_argument("backbone needs at least one layer");
  if (backbone.front().in != 3) throw std::invalid_argument("backbone must take 3 input channels");
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    const auto& l = backbone[i];
    if (l.in < 1 || l.out < 1 || l.kernel < 1 || l.kernel % 2 == 0 || l.stride < 1) {
      throw std::invalid_argument("invalid backbone layer " + std::to_string(i));
    }
    if (i > 0 && backbone[i - 1].out != l.in) throw std::invalid_argument("backbone channel mismatch");
  }
  if (attention.num_heads < 1 || attention.num_points < 1 || attention.hidden < 1) {
    throw std::invalid_argument("attention sizes must be positive");
  }
  if (channels() % attention.num_heads != 0) {
    throw std::invalid_argument("channels must be divisible by the number of heads");
  }
  if (position_encoding.num_bands < 1 || direction_encoding.num_bands < 1) {
    throw std::invalid_argument("encodings need at least one band");
  }
  if (heads.sdf_hidden < 1 || heads.rgb_hidden < 1 || !(heads.omega_init > 0.0)) {
    throw std::invalid_argument("invalid head configuration");
  }
  contraction.validate();
}

namespace {

DenseSlot add_dense(ParamTape& tape, const std::string& group, const std::string& name, int in, int out) {
  DenseSlot d;
  d.in = in;
  d.out = out;
  d.weight = tape.add(group, name + ".weight", {in, out});
  d.bias = tape.add(group, name + ".bias", {out});
  return d;
}

void fill_uniform(std::span<double> values, double bound, RngState& rng) {
  for (double& v : values) v = (2.0 * rng.next_uniform() - 1.0) * bound;
}

void init_dense(const DenseSlot& d, ParamTape& tape, RngState& rng) {
  fill_uniform(tape.value(d.weight), 1.0 / std::sqrt(static_cast<double>(d.in)), rng);
  for (double& b : tape.value(d.bias)) b = 0.0;
}

}  // namespace

FieldModel build_model(const ModelConfig& config, ParamTape& tape) {
  if (tape.size() != 0) throw std::invalid_argument("build_model expects an empty tape");
  config.validate();
  FieldModel m;
  m.config = config;
  const int c = config.channels();
  const int dh = config.head_dim();
  const int nh = config.attention.num_heads;
  const int ns = config.attention.num_points;
  const int hidden = config.attention.hidden;
  const int pos = config.position_encoding.output_size();
  const int dir = config.direction_encoding.output_size();

  for (std::size_t i = 0; i < config.backbone.size(); ++i) {
    const auto& l = config.backbone[i];
    ConvSlot slot;
    slot.spec = l;
    const std::string name = "conv" + std::to_string(i);
    slot.weight = tape.add("backbone", name + ".weight", {l.kernel * l.kernel * l.in, l.out});
    slot.bias = tape.add("backbone", name + ".bias", {l.out});
    m.backbone.push_back(slot);
  }
  m.offset_net.push_back(add_dense(tape, "offset_net", "l0", pos, hidden));
  m.offset_net.push_back(add_dense(tape, "offset_net", "l1", hidden, nh * ns * 2));
  m.attn_net.push_back(add_dense(tape, "attn_net", "l0", pos, hidden));
  m.attn_net.push_back(add_dense(tape, "attn_net", "l1", hidden, nh * ns));
  m.head_out = tape.add("W_h", "W_h", {nh, dh, c});
  m.value_proj = tape.add("W_s", "W_s", {ns, c, dh});
  const int sh = config.heads.sdf_hidden;
  m.sdf_mlp.push_back(add_dense(tape, "sdf_mlp", "l0", c + pos, sh));
  m.sdf_mlp.push_back(add_dense(tape, "sdf_mlp", "l1", sh, sh));
  m.sdf_mlp.push_back(add_dense(tape, "sdf_mlp", "l2", sh, 1));
  const int rh = config.heads.rgb_hidden;
  m.rgb_mlp.push_back(add_dense(tape, "rgb_mlp", "l0", c + dir, rh));
  m.rgb_mlp.push_back(add_dense(tape, "rgb_mlp", "l1", rh, 3));
  m.log_omega = tape.add("log_omega", "log_omega", {1});
  return m;
}

void initialize_parameters(const FieldModel& model, ParamTape& tape, RngState& rng) {
  for (const auto& conv : model.backbone) {
    const auto& l = conv.spec;
    fill_uniform(tape.value(conv.weight), 1.0 / std::sqrt(static_cast<double>(l.kernel * l.kernel * l.in)), rng);
    for (double& b : tape.value(conv.bias)) b = 0.0;
  }
  init_dense(model.offset_net[0], tape, rng);
  for (double& v : tape.value(model.offset_net[1].weight)) v = 0.0;
  for (double& v : tape.value(model.offset_net[1].bias)) v = 0.0;
  for (const auto& d : model.attn_net) init_dense(d, tape, rng);
  fill_uniform(tape.value(model.head_out), 1.0 / std::sqrt(static_cast<double>(model.head_dim())), rng);
  fill_uniform(tape.value(model.value_proj), 1.0 / std::sqrt(static_cast<double>(model.channels())), rng);
  for (const auto& d : model.sdf_mlp) init_dense(d, tape, rng);
  tape.value(model.sdf_mlp.back().bias)[0] = model.config.heads.sdf_bias_init;
  for (const auto& d : model.rgb_mlp) init_dense(d, tape, rng);
  tape.value(model.log_omega)[0] = std::log(model.config.heads.omega_init);
}

}  // namespace nerp
