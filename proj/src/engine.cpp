#include "nerp/engine.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>

namespace nerp {

OptimState make_optim_state(const ParamTape& tape, const OptimSettings& settings) {
  OptimState s;
  s.settings = settings;
  s.m.assign(tape.size(), 0.0);
  s.v.assign(tape.size(), 0.0);
  return s;
}

void optim_step(ParamTape& tape, OptimState& state) {
  if (state.m.size() != tape.size() || state.v.size() != tape.size()) {
    throw std::invalid_argument("optimizer state does not match the parameter tape");
  }
  const auto grads = tape.grads();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw NumericFault("non-finite gradient at parameter index " + std::to_string(i));
  }
  const OptimSettings& o = state.settings;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  auto values = tape.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] *= 1.0 - o.lr * o.weight_decay;
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grads[i];
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    values[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

TrainingData prepare_training_data(const SyntheticScene& scene, int lidar_rays, std::uint64_t seed) {
  scene.validate();
  TrainingData data;
  data.scene = scene;
  data.train_cameras = scene.cameras_with_role(CameraRole::Train);
  for (const auto& cam : data.train_cameras) {
    auto ref = trace_reference(scene, cam);
    data.train_images.push_back(std::move(ref.image));
    data.train_depths.push_back(std::move(ref.depth));
  }
  auto sources = std::make_shared<std::vector<SourceView>>();
  for (const auto& cam : scene.cameras_with_role(CameraRole::Source)) {
    sources->push_back(SourceView{trace_reference(scene, cam).image, cam});
  }
  data.sources = std::move(sources);
  RngState rng = RngState{seed, 0}.split(7);
  data.lidar = simulate_lidar(scene, default_lidar(scene), lidar_rays, rng);
  return data;
}

SampledBatch sample_batch(const TrainingData& data, int batch_size, int samples_per_ray, RngState& rng) {
  if (batch_size < 1) throw std::domain_error("batch size must be positive");
  SampledBatch out;
  out.samples_per_ray = samples_per_ray;
  out.batch.source_views = data.sources;
  const int lidar = data.lidar.empty() ? 0 : (batch_size + 2) / 5;
  const int camera = batch_size - lidar;
  const auto views = data.train_images.size();
  for (int i = 0; i < camera; ++i) {
    const auto v = rng.next_index(views);
    const Image& img = data.train_images[v];
    const int px = static_cast<int>(rng.next_index(img.width));
    const int py = static_cast<int>(rng.next_index(img.height));
    const auto& cam = data.train_cameras[v];
    const Ray ray = generate_ray(cam.intrinsics, cam.pose, px + 0.5, py + 0.5, data.scene.ray_range());
    out.batch.add(ray, Color(img.at(py, px, 0), img.at(py, px, 1), img.at(py, px, 2)), std::nullopt);
  }
  for (int i = 0; i < lidar; ++i) {
    const auto& ret = data.lidar[rng.next_index(data.lidar.size())];
    out.batch.add(ret.ray, std::nullopt, ret.depth);
  }
  out.t_values.reserve(out.batch.size() * samples_per_ray);
  for (const auto& ray : out.batch.rays) {
    const auto samples = sample_ray_stratified(ray, samples_per_ray, rng);
    out.t_values.insert(out.t_values.end(), samples.t_values.begin(), samples.t_values.end());
  }
  return out;
}

namespace {

void check_finite(const BatchResult& r) {
  if (!std::isfinite(r.parts.rgb)) throw NumericFault("non-finite rgb loss");
  if (!std::isfinite(r.parts.depth)) throw NumericFault("non-finite depth loss");
  if (!std::isfinite(r.parts.reproj)) throw NumericFault("non-finite reprojection loss");
  if (!std::isfinite(r.loss)) throw NumericFault("non-finite total loss");
}

}  // namespace

BatchResult forward(const FieldModel& model, const ParamTape& tape, const TrainingData& data,
                    const SampledBatch& sampled, const LossWeights& weights) {
  const FeatureMap fm = extract_features(model, tape, data.train_images, data.train_cameras);
  const ConditioningContext ctx = build_conditioning(model, tape, fm);
  auto r = evaluate_batch(model, tape, ctx, sampled.batch, sampled.t_values, sampled.samples_per_ray, weights, {}, {});
  check_finite(r);
  return r;
}

BatchResult forward_backward(const FieldModel& model, ParamTape& tape, const TrainingData& data,
                             const SampledBatch& sampled, const LossWeights& weights) {
  BackboneCache cache;
  const FeatureMap fm = extract_features(model, tape, data.train_images, data.train_cameras, &cache);
  const ConditioningContext ctx = build_conditioning(model, tape, fm);
  AlignedBuffer d_value_maps(ctx.value_maps.size(), 0.0);
  auto r = evaluate_batch(model, tape, ctx, sampled.batch, sampled.t_values, sampled.samples_per_ray, weights,
                          tape.grads(), d_value_maps);
  check_finite(r);
  AlignedBuffer d_features(fm.values.size(), 0.0);
  backward_conditioning(model, tape, ctx, d_value_maps, tape.grads(), d_features);
  backward_features(model, tape, cache, d_features, tape.grads());
  return r;
}

GradCheckResult grad_check(const std::function<double(const ParamTape&)>& loss, ParamTape& tape,
                           std::span<const double> analytic, std::span<const std::size_t> indices, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("grad_check: eps must be positive");
  GradCheckResult out;
  auto values = tape.values();
  for (std::size_t idx : indices) {
    const double saved = values[idx];
    values[idx] = saved + eps;
    const double plus = loss(tape);
    values[idx] = saved - eps;
    const double minus = loss(tape);
    values[idx] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = analytic[idx];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (err > out.max_rel_error || (idx == indices.front() && out.max_rel_error == 0.0)) {
      out.max_rel_error = err;
      out.worst_index = idx;
      out.worst_analytic = a;
      out.worst_numeric = numeric;
    }
  }
  return out;
}

TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& config) {
  TrainState s;
  s.model = build_model(model_config, s.tape);
  RngState init_rng = RngState{config.seed, 0}.split(1);
  initialize_parameters(s.model, s.tape, init_rng);
  s.optim = make_optim_state(s.tape, config.optim);
  s.rng = RngState{config.seed, 0}.split(2);
  return s;
}

std::string format_metrics(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.6f", static_cast<long long>(r.step), r.total,
                r.parts.rgb, r.parts.depth, r.parts.reproj, r.psnr_train);
  return buf;
}

void train(TrainState& state, const TrainingData& data, const TrainConfig& config, int steps,
           const std::function<void(const MetricsRecord&)>& on_metrics) {
  for (int k = 0; k < steps; ++k) {
    const SampledBatch sampled = sample_batch(data, config.batch_size, config.samples_per_ray, state.rng);
    state.tape.zero_grads();
    const BatchResult r = forward_backward(state.model, state.tape, data, sampled, config.weights);
    optim_step(state.tape, state.optim);
    ++state.step;
    const bool last = k + 1 == steps;
    if (on_metrics && (last || (config.log_every > 0 && state.step % config.log_every == 0))) {
      MetricsRecord rec;
      rec.step = state.step;
      rec.total = r.loss;
      rec.parts = r.parts;
      rec.psnr_train = r.color_mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / r.color_mse);
      on_metrics(rec);
    }
  }
}

RenderedView render_view(const FieldModel& model, const ParamTape& tape, const ConditioningContext& ctx,
                         const Camera& camera, int samples_per_ray, RayRange range) {
  const auto& cam = camera.intrinsics;
  std::vector<Ray> rays;
  std::vector<double> t_values;
  rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      rays.push_back(generate_ray(cam, camera.pose, x + 0.5, y + 0.5, range));
      const auto s = sample_ray_regular(rays.back(), samples_per_ray);
      t_values.insert(t_values.end(), s.t_values.begin(), s.t_values.end());
    }
  }
  const RayRender rr = render_rays(model, tape, ctx, rays, t_values, samples_per_ray);
  RenderedView out{Image(cam.height, cam.width, 3), Image(cam.height, cam.width, 1)};
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * cam.width + x;
      for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = rr.colors[i][c];
      out.depth.at(y, x) = rr.depths[i];
    }
  }
  return out;
}

Conditioning condition_on(const FieldModel& model, const ParamTape& tape, const TrainingData& data) {
  Conditioning c;
  auto fm = std::make_shared<FeatureMap>(extract_features(model, tape, data.train_images, data.train_cameras));
  c.ctx = build_conditioning(model, tape, *fm);
  c.features = std::move(fm);
  return c;
}

ViewMetrics compare_view(const RenderedView& pred, const ReferenceView& gt, double depth_cap) {
  ViewMetrics m;
  m.psnr = psnr(pred.color, gt.image);
  m.ssim = ssim(pred.color, gt.image);
  const std::unique_ptr<bool[]> mask(new bool[gt.depth.data.size()]);
  std::fill(mask.get(), mask.get() + gt.depth.data.size(), true);
  m.depth = depth_metrics(pred.depth.data, gt.depth.data, std::span<const bool>(mask.get(), gt.depth.data.size()),
                          depth_cap);
  return m;
}

SplitReport summarize(std::vector<ViewMetrics> views) {
  SplitReport r;
  r.views = std::move(views);
  if (r.views.empty()) return r;
  const double n = static_cast<double>(r.views.size());
  for (const auto& v : r.views) {
    r.mean.psnr += v.psnr / n;
    r.mean.ssim += v.ssim / n;
    r.mean.depth.abs_rel += v.depth.abs_rel / n;
    r.mean.depth.sq_rel += v.depth.sq_rel / n;
    r.mean.depth.rmse += v.depth.rmse / n;
    r.mean.depth.rmse_log += v.depth.rmse_log / n;
    r.mean.depth.delta1 += v.depth.delta1 / n;
    r.mean.depth.delta2 += v.depth.delta2 / n;
    r.mean.depth.delta3 += v.depth.delta3 / n;
    r.mean.depth.valid_count += v.depth.valid_count;
  }
  return r;
}

SplitReport evaluate_split(const FieldModel& model, const ParamTape& tape, const TrainingData& data, CameraRole role,
                           int samples_per_ray) {
  const auto cameras = data.scene.cameras_with_role(role);
  if (cameras.empty()) throw std::domain_error("split '" + to_string(role) + "' has no cameras");
  const Conditioning cond = condition_on(model, tape, data);
  std::vector<ViewMetrics> views;
  for (const auto& cam : cameras) {
    const RenderedView pred = render_view(model, tape, cond.ctx, cam, samples_per_ray, data.scene.ray_range());
    views.push_back(compare_view(pred, trace_reference(data.scene, cam), data.scene.diameter()));
  }
  return summarize(std::move(views));
}

}  // namespace nerp
