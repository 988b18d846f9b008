#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nerp/engine.hpp"
#include "nerp/run_config.hpp"

namespace nerp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "NRP3", u32 version, u64 header length, JSON header (run config,
// step, rng, tensor table), then little-endian f64 parameter values followed by
// the first and second optimizer moments, each in tape order.
struct Checkpoint {
  RunConfig config;
  std::int64_t step = 0;
  RngState rng;
  std::int64_t optim_step = 0;
  std::vector<TensorSlot> layout;
  std::vector<double> values;
  std::vector<double> m;
  std::vector<double> v;
};

Checkpoint make_checkpoint(const RunConfig& config, const TrainState& state);

// Rebuilds the model from the stored config and checks the stored tensor table against it.
TrainState restore_train_state(const Checkpoint& ckpt, const SyntheticScene& scene);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nerp
