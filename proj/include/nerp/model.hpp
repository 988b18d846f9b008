#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nerp/geometry.hpp"
#include "nerp/param_tape.hpp"
#include "nerp/sampling.hpp"

namespace nerp {

enum class FieldKind { Sdf, Density };

std::string to_string(FieldKind kind);
FieldKind field_kind_from_string(const std::string& name);

struct ConvLayerSpec {
  int in = 3;
  int out = 3;
  int kernel = 1;
  int stride = 1;
  bool activation = false;  // softplus after the conv when set
};

// Strided conv stack with total stride `stride` (1, 2 or 4) and `channels` outputs.
std::vector<ConvLayerSpec> default_backbone(int channels, int stride);

struct AttentionConfig {
  int num_heads = 4;
  int num_points = 4;
  int hidden = 64;
};

struct HeadConfig {
  int sdf_hidden = 64;
  int rgb_hidden = 64;
  double omega_init = 10.0;
  double sdf_bias_init = 0.5;
};

struct ModelConfig {
  EncodingConfig position_encoding{6, true};
  EncodingConfig direction_encoding{4, true};
  ContractionConfig contraction;
  std::vector<ConvLayerSpec> backbone = default_backbone(32, 4);
  AttentionConfig attention;
  HeadConfig heads;
  FieldKind field = FieldKind::Sdf;

  int channels() const { return backbone.back().out; }
  int stride() const;
  int head_dim() const { return channels() / attention.num_heads; }
  void validate() const;
};

struct DenseSlot {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;
};

struct ConvSlot {
  ConvLayerSpec spec;
  std::size_t weight = 0;  // (kernel*kernel*in) x out
  std::size_t bias = 0;
};

// Parameter layout of the whole field: which tape slots hold which tensors.
struct FieldModel {
  ModelConfig config;
  std::vector<ConvSlot> backbone;
  std::vector<DenseSlot> offset_net;
  std::vector<DenseSlot> attn_net;
  std::size_t head_out = 0;    // per head (head_dim x C): the output projections W_h, stored transposed
  std::size_t value_proj = 0;  // per point (C x head_dim): the value projections W'_s, stored transposed
  std::vector<DenseSlot> sdf_mlp;
  std::vector<DenseSlot> rgb_mlp;
  std::size_t log_omega = 0;

  int position_dim() const { return config.position_encoding.output_size(); }
  int direction_dim() const { return config.direction_encoding.output_size(); }
  int channels() const { return config.channels(); }
  int head_dim() const { return config.head_dim(); }
  int num_heads() const { return config.attention.num_heads; }
  int num_points() const { return config.attention.num_points; }
};

// Segment names, in tape order.
inline const std::vector<std::string>& segment_names() {
  static const std::vector<std::string> names = {"backbone", "offset_net", "attn_net", "W_h",
                                                 "W_s",      "sdf_mlp",    "rgb_mlp",  "log_omega"};
  return names;
}

// Registers every tensor of the model on `tape` (which must be empty).
FieldModel build_model(const ModelConfig& config, ParamTape& tape);

// Fan-in scaled uniform weights, zero offset head, ln(omega_init) for log_omega.
void initialize_parameters(const FieldModel& model, ParamTape& tape, RngState& rng);

}  // namespace nerp
