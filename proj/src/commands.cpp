#include "nerp/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nerp/checkpoint.hpp"
#include "nerp/errors.hpp"
#include "nerp/image_io.hpp"
#include "nerp/scene_io.hpp"

namespace nerp {
namespace {

struct Loaded {
  Checkpoint ckpt;
  SyntheticScene scene;
  TrainState state;
  TrainingData data;
};

Loaded load_run(const std::string& checkpoint, const std::optional<std::string>& scene_path) {
  Loaded l;
  l.ckpt = load_checkpoint(checkpoint);
  l.scene = load_scene(scene_path.value_or(l.ckpt.config.scene));
  l.state = restore_train_state(l.ckpt, l.scene);
  l.data = prepare_training_data(l.scene, 0, l.ckpt.config.seed);
  return l;
}

std::string format_view(const std::string& split, const std::string& view, const ViewMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "split=%s view=%s psnr=%.6f ssim=%.6f abs_rel=%.6f sq_rel=%.6f rmse=%.6f rmse_log=%.6f "
                "delta1=%.6f delta2=%.6f delta3=%.6f valid=%ld",
                split.c_str(), view.c_str(), m.psnr, m.ssim, m.depth.abs_rel, m.depth.sq_rel, m.depth.rmse,
                m.depth.rmse_log, m.depth.delta1, m.depth.delta2, m.depth.delta3, m.depth.valid_count);
  return buf;
}

std::string format_view_human(const std::string& split, const std::string& view, const ViewMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-8s %-5s PSNR %.6f dB  SSIM %.6f  AbsRel %.6f  SqRel %.6f  RMSE %.6f  RMSElog %.6f  "
                "d1 %.6f  d2 %.6f  d3 %.6f",
                split.c_str(), view.c_str(), m.psnr, m.ssim, m.depth.abs_rel, m.depth.sq_rel, m.depth.rmse,
                m.depth.rmse_log, m.depth.delta1, m.depth.delta2, m.depth.delta3);
  return buf;
}

}  // namespace

void cmd_gen_scene(const std::string& preset, const std::string& out_path) {
  SyntheticScene scene;
  try {
    scene = make_preset(preset);
  } catch (const std::invalid_argument& e) {
    throw InputFault(e.what());
  }
  save_scene(out_path, scene);
}

void cmd_pretrain(const RunConfig& config, std::ostream& log) {
  config.validate();
  const SyntheticScene scene = load_scene(config.scene);
  const ModelConfig model_config = make_model_config(config, scene);
  const TrainConfig train_config = make_train_config(config);
  const TrainingData data = prepare_training_data(scene, train_config.lidar_rays, train_config.seed);
  TrainState state = init_train_state(model_config, train_config);

  std::filesystem::create_directories(config.out);
  const std::string metrics_path = (std::filesystem::path(config.out) / "metrics.csv").string();
  std::ofstream metrics(metrics_path);
  if (!metrics) throw InputFault("cannot open '" + metrics_path + "' for writing");
  metrics << metrics_header() << "\n";
  log << metrics_header() << "\n";
  train(state, data, train_config, config.steps, [&](const MetricsRecord& r) {
    const std::string line = format_metrics(r);
    metrics << line << "\n";
    log << line << "\n";
  });
  metrics.flush();
  if (!metrics) throw InputFault("write to '" + metrics_path + "' failed");
  save_checkpoint((std::filesystem::path(config.out) / "checkpoint.nrp3").string(), make_checkpoint(config, state));
}

void cmd_render(const RenderOptions& options) {
  const Loaded l = load_run(options.checkpoint, options.scene);
  if (options.camera < 0 || options.camera >= static_cast<int>(l.scene.cameras.size())) {
    throw InputFault("camera index " + std::to_string(options.camera) + " out of range (scene has " +
                     std::to_string(l.scene.cameras.size()) + " cameras)");
  }
  Camera camera = l.scene.cameras[options.camera].camera;
  if (options.pose) {
    const auto& m = *options.pose;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) camera.pose.rotation(r, c) = m[r * 4 + c];
      camera.pose.translation(r) = m[r * 4 + 3];
    }
    try {
      camera.pose.validate();
    } catch (const std::domain_error& e) {
      throw InputFault(std::string("pose: ") + e.what());
    }
  }
  const Conditioning cond = condition_on(l.state.model, l.state.tape, l.data);
  const RenderedView view = render_view(l.state.model, l.state.tape, cond.ctx, camera,
                                        l.ckpt.config.samples_per_ray, l.scene.ray_range());
  write_ppm(options.out_prefix + ".ppm", view.color);
  write_f32(options.out_prefix + ".f32", view.color);
  write_f32(options.out_prefix + "_depth.f32", view.depth);
}

void cmd_eval(const EvalOptions& options, std::ostream& out) {
  CameraRole role;
  try {
    role = camera_role_from_string(options.split);
  } catch (const std::invalid_argument& e) {
    throw InputFault(e.what());
  }
  const Loaded l = load_run(options.checkpoint, options.scene);
  const auto cameras = l.scene.cameras_with_role(role);
  if (cameras.empty()) throw InputFault("split '" + options.split + "' has no cameras");
  std::vector<ViewMetrics> views;
  if (options.oracle) {
    for (const auto& cam : cameras) {
      const ReferenceView ref = trace_reference(l.scene, cam);
      views.push_back(compare_view(RenderedView{ref.image, ref.depth}, ref, l.scene.diameter()));
    }
  } else {
    const Conditioning cond = condition_on(l.state.model, l.state.tape, l.data);
    for (const auto& cam : cameras) {
      const RenderedView pred = render_view(l.state.model, l.state.tape, cond.ctx, cam,
                                            l.ckpt.config.samples_per_ray, l.scene.ray_range());
      views.push_back(compare_view(pred, trace_reference(l.scene, cam), l.scene.diameter()));
    }
  }
  const SplitReport report = summarize(std::move(views));
  for (std::size_t i = 0; i < report.views.size(); ++i) {
    out << format_view_human(options.split, std::to_string(i), report.views[i]) << "\n";
  }
  out << format_view_human(options.split, "mean", report.mean) << "\n";
  for (std::size_t i = 0; i < report.views.size(); ++i) {
    out << "metrics " << format_view(options.split, std::to_string(i), report.views[i]) << "\n";
  }
  out << "metrics " << format_view(options.split, "mean", report.mean) << "\n";
}

void cmd_extract_features(const ExtractOptions& options) {
  if (options.x < 1 || options.y < 1 || options.z < 1) throw InputFault("grid resolution must be at least 1");
  const Loaded l = load_run(options.checkpoint, options.scene);
  const Conditioning cond = condition_on(l.state.model, l.state.tape, l.data);
  const GridSamples grid = sample_uniform_grid(l.state.model.config.contraction, {options.x, options.y, options.z});
  const std::vector<double> z = embed_many(l.state.model, l.state.tape, cond.ctx, grid.points);
  Volume volume;
  volume.x = options.x;
  volume.y = options.y;
  volume.z = options.z;
  volume.channels = l.state.model.channels();
  volume.values.assign(z.begin(), z.end());
  write_volume(options.out, volume);
}

int cmd_grad_check(const RunConfig& config, const GradCheckOptions& options, std::ostream& out) {
  config.validate();
  if (options.indices_per_segment < 1 || options.rays < 1 || !(options.eps > 0.0)) {
    throw InputFault("grad-check: indices, rays and eps must be positive");
  }
  const SyntheticScene scene = load_scene(config.scene);
  const ModelConfig model_config = make_model_config(config, scene);
  const TrainConfig train_config = make_train_config(config);
  const TrainingData data = prepare_training_data(scene, train_config.lidar_rays, train_config.seed);
  TrainState state = init_train_state(model_config, train_config);
  if (options.perturb > 0.0) {
    RngState noise = RngState{config.seed, 0}.split(3);
    for (double& v : state.tape.values()) v += options.perturb * noise.next_normal();
  }
  const SampledBatch sampled = sample_batch(data, options.rays, train_config.samples_per_ray, state.rng);
  state.tape.zero_grads();
  const BatchResult base = forward_backward(state.model, state.tape, data, sampled, train_config.weights);
  const std::vector<double> analytic(state.tape.grads().begin(), state.tape.grads().end());
  const auto loss = [&](const ParamTape& tape) {
    return forward(state.model, tape, data, sampled, train_config.weights).loss;
  };

  char buf[512];
  std::snprintf(buf, sizeof buf, "grad-check rays=%d samples=%d eps=%g perturb=%g loss=%.12g", options.rays,
                train_config.samples_per_ray, options.eps, options.perturb, base.loss);
  out << buf << "\n";
  RngState picker = RngState{config.seed, 0}.split(4);
  double worst = 0.0;
  for (const Segment& seg : state.tape.segments()) {
    std::vector<std::size_t> indices(seg.size);
    for (std::size_t i = 0; i < seg.size; ++i) indices[i] = seg.offset + i;
    const std::size_t take = std::min<std::size_t>(seg.size, static_cast<std::size_t>(options.indices_per_segment));
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(indices[i], indices[i + picker.next_index(seg.size - i)]);
    }
    indices.resize(take);
    const GradCheckResult r = grad_check(loss, state.tape, analytic, indices, options.eps);
    worst = std::max(worst, r.max_rel_error);
    std::snprintf(buf, sizeof buf, "segment=%s indices=%zu max_rel_error=%.3e worst_index=%zu analytic=%.9e numeric=%.9e",
                  seg.name.c_str(), take, r.max_rel_error, r.worst_index, r.worst_analytic, r.worst_numeric);
    out << buf << "\n";
  }
  const bool pass = worst < options.threshold;
  std::snprintf(buf, sizeof buf, "max_rel_error=%.3e threshold=%.1e %s", worst, options.threshold,
                pass ? "PASS" : "FAIL");
  out << buf << "\n";
  return pass ? kExitOk : kExitThreshold;
}

}  // namespace nerp
