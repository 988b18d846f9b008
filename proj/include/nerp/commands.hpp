#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "nerp/run_config.hpp"

namespace nerp {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitInput = 2,
  kExitNumeric = 3,
  kExitThreshold = 4,
};

void cmd_gen_scene(const std::string& preset, const std::string& out_path);

// Trains from `config`; writes <out>/checkpoint.nrp3 and <out>/metrics.csv and
// echoes every metrics line to `log`.
void cmd_pretrain(const RunConfig& config, std::ostream& log);

struct RenderOptions {
  std::string checkpoint;
  std::optional<std::string> scene;            // defaults to the checkpoint's scene path
  int camera = 0;                              // index into the scene's camera list
  std::optional<std::array<double, 16>> pose;  // row-major camera-to-world; replaces the camera's pose
  std::string out_prefix = "render";
};

// Writes <prefix>.ppm, <prefix>.f32 (color) and <prefix>_depth.f32.
void cmd_render(const RenderOptions& options);

struct EvalOptions {
  std::string checkpoint;
  std::optional<std::string> scene;
  std::string split = "heldout";
  bool oracle = false;  // score the oracle images against themselves
};

void cmd_eval(const EvalOptions& options, std::ostream& out);

struct ExtractOptions {
  std::string checkpoint;
  std::optional<std::string> scene;
  int x = 16;
  int y = 16;
  int z = 8;
  std::string out = "features.nrpv";
};

void cmd_extract_features(const ExtractOptions& options);

struct GradCheckOptions {
  int indices_per_segment = 50;
  int rays = 32;
  double eps = 1e-5;
  double perturb = 0.0;  // std-dev of Gaussian noise added to the initial parameters
  double threshold = 1e-3;
};

// Returns kExitOk when every segment passes, kExitThreshold otherwise.
int cmd_grad_check(const RunConfig& config, const GradCheckOptions& options, std::ostream& out);

}  // namespace nerp
