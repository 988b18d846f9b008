#include <array>
#include <fstream>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nerp/commands.hpp"
#include "nerp/errors.hpp"
#include "nerp/run_config.hpp"

namespace {

// Options shared by every subcommand; only some of them apply to each.
struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Common& c, const std::string& out_help) {
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--steps", c.steps, "Optimizer steps");
  sub->add_option("--out", c.out, out_help);
}

struct RunFlags {
  std::optional<std::string> config;
  std::optional<std::string> scene;
  std::optional<int> batch;
  std::optional<int> samples;
  std::optional<int> lidar_rays;
  std::optional<int> log_every;
  std::optional<double> lr;
  std::optional<double> lambda_rgb;
  std::optional<double> lambda_depth;
  std::optional<double> lambda_reproj;
  bool no_reproj = false;
  bool no_depth = false;
  bool density_field = false;
  bool no_contraction = false;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
  sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--scene", f.scene, "Scene JSON");
  sub->add_option("--batch", f.batch, "Rays per step");
  sub->add_option("--samples", f.samples, "Samples per ray");
  sub->add_option("--lidar-rays", f.lidar_rays, "Number of LiDAR returns");
  sub->add_option("--log-every", f.log_every, "Steps between metrics lines");
  sub->add_option("--lr", f.lr, "Learning rate");
  sub->add_option("--lambda-rgb", f.lambda_rgb, "Color loss weight");
  sub->add_option("--lambda-depth", f.lambda_depth, "Depth loss weight");
  sub->add_option("--lambda-reproj", f.lambda_reproj, "Reprojection loss weight");
  sub->add_flag("--no-reproj", f.no_reproj, "Disable the reprojection loss");
  sub->add_flag("--no-depth", f.no_depth, "Disable the depth loss");
  sub->add_flag("--density-field", f.density_field, "Use a density field instead of an SDF");
  sub->add_flag("--no-contraction", f.no_contraction, "Disable scene contraction");
}

nerp::RunConfig resolve(const RunFlags& f, const Common& c) {
  nerp::RunConfig config = f.config ? nerp::load_run_config(*f.config) : nerp::RunConfig{};
  if (f.scene) config.scene = *f.scene;
  if (c.seed) config.seed = *c.seed;
  if (c.steps) config.steps = *c.steps;
  if (c.out) config.out = *c.out;
  if (f.batch) config.batch_size = *f.batch;
  if (f.samples) config.samples_per_ray = *f.samples;
  if (f.lidar_rays) config.lidar_rays = *f.lidar_rays;
  if (f.log_every) config.log_every = *f.log_every;
  if (f.lr) config.optimizer.lr = *f.lr;
  if (f.lambda_rgb) config.loss_weights.rgb = *f.lambda_rgb;
  if (f.lambda_depth) config.loss_weights.depth = *f.lambda_depth;
  if (f.lambda_reproj) config.loss_weights.reproj = *f.lambda_reproj;
  if (f.no_reproj) config.loss_weights.reproj = 0.0;
  if (f.no_depth) config.loss_weights.depth = 0.0;
  if (f.density_field) config.field = nerp::FieldKind::Density;
  if (f.no_contraction) config.contraction = false;
  if (config.scene.empty()) throw nerp::InputFault("no scene given (use --scene or a config file)");
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-conditioned neural surface fields for desk-scale scenes"};
  app.require_subcommand(1);

  Common gen_common;
  std::string preset = "sphere-box";
  auto* gen = app.add_subcommand("gen-scene", "Write a preset scene as JSON");
  gen->add_option("--preset", preset, "Preset name")->check(CLI::IsMember(nerp::preset_names()));
  add_common(gen, gen_common, "Output scene JSON (default scene.json)");

  Common pre_common;
  RunFlags pre_flags;
  auto* pre = app.add_subcommand("pretrain", "Train a model and write a checkpoint");
  add_common(pre, pre_common, "Output directory");
  add_run_flags(pre, pre_flags);

  Common ren_common;
  nerp::RenderOptions ren_opts;
  std::vector<double> pose;
  auto* ren = app.add_subcommand("render", "Render a view from a checkpoint");
  add_common(ren, ren_common, "Output file prefix");
  ren->add_option("--checkpoint", ren_opts.checkpoint, "Checkpoint file")->required();
  ren->add_option("--scene", ren_opts.scene, "Scene JSON (default: the one used for training)");
  ren->add_option("--camera", ren_opts.camera, "Camera index in the scene");
  ren->add_option("--pose", pose, "16 row-major camera-to-world values")->expected(16);

  Common eval_common;
  nerp::EvalOptions eval_opts;
  auto* ev = app.add_subcommand("eval", "Score rendered views against the ground truth");
  add_common(ev, eval_common, "Also write the report to this file");
  ev->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file")->required();
  ev->add_option("--scene", eval_opts.scene, "Scene JSON (default: the one used for training)");
  ev->add_option("--split", eval_opts.split, "Camera split")->check(CLI::IsMember({"train", "heldout", "source"}));
  ev->add_flag("--oracle", eval_opts.oracle, "Score the ground truth against itself");

  Common ext_common;
  nerp::ExtractOptions ext_opts;
  std::vector<int> grid;
  auto* ext = app.add_subcommand("extract-features", "Write point embeddings on a regular ROI grid");
  add_common(ext, ext_common, "Output volume (default features.nrpv)");
  ext->add_option("--checkpoint", ext_opts.checkpoint, "Checkpoint file")->required();
  ext->add_option("--scene", ext_opts.scene, "Scene JSON (default: the one used for training)");
  ext->add_option("--grid", grid, "Resolution X Y Z")->expected(3);

  Common gc_common;
  RunFlags gc_flags;
  nerp::GradCheckOptions gc_opts;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  add_common(gc, gc_common, "Unused");
  add_run_flags(gc, gc_flags);
  gc->add_option("--indices", gc_opts.indices_per_segment, "Indices per parameter segment");
  gc->add_option("--rays", gc_opts.rays, "Rays in the probe batch");
  gc->add_option("--eps", gc_opts.eps, "Central-difference step");
  gc->add_option("--perturb", gc_opts.perturb, "Std-dev of noise added to the initial parameters");
  gc->add_option("--threshold", gc_opts.threshold, "Maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? nerp::kExitOk : nerp::kExitUsage;
  }

  try {
    if (*gen) {
      nerp::cmd_gen_scene(preset, gen_common.out.value_or("scene.json"));
    } else if (*pre) {
      nerp::cmd_pretrain(resolve(pre_flags, pre_common), std::cout);
    } else if (*ren) {
      if (!pose.empty()) {
        std::array<double, 16> p{};
        std::copy(pose.begin(), pose.end(), p.begin());
        ren_opts.pose = p;
      }
      if (ren_common.out) ren_opts.out_prefix = *ren_common.out;
      nerp::cmd_render(ren_opts);
    } else if (*ev) {
      if (eval_common.out) {
        std::ostringstream report;
        nerp::cmd_eval(eval_opts, report);
        std::cout << report.str();
        std::ofstream file(*eval_common.out);
        file << report.str();
        if (!file) throw nerp::InputFault("cannot write '" + *eval_common.out + "'");
      } else {
        nerp::cmd_eval(eval_opts, std::cout);
      }
    } else if (*ext) {
      if (!grid.empty()) {
        ext_opts.x = grid[0];
        ext_opts.y = grid[1];
        ext_opts.z = grid[2];
      }
      if (ext_common.out) ext_opts.out = *ext_common.out;
      nerp::cmd_extract_features(ext_opts);
    } else if (*gc) {
      return nerp::cmd_grad_check(resolve(gc_flags, gc_common), gc_opts, std::cout);
    }
  } catch (const nerp::InputFault& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nerp::kExitInput;
  } catch (const nerp::NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return nerp::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nerp::kExitInput;
  }
  return nerp::kExitOk;
}
