#include "nerp/sampling.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nerp {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RaySamples make_samples(const Ray& ray, std::vector<double> t_values) {
  RaySamples out;
  out.ray = ray;
  out.points.reserve(t_values.size());
  for (double t : t_values) out.points.push_back(ray.at(t));
  out.t_values = std::move(t_values);
  return out;
}

void check_count(int count) {
  if (count < 1) throw std::domain_error("ray sample count must be at least 1");
}

}  // namespace

std::uint64_t RngState::next_u64() {
  const std::uint64_t value = splitmix64(splitmix64(seed) ^ (counter * 0xd1b54a32d192ed03ULL));
  ++counter;
  return value;
}

double RngState::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::next_normal() {
  const double u1 = 1.0 - next_uniform();
  const double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngState::next_index(std::uint64_t n) {
  if (n == 0) throw std::domain_error("next_index: empty range");
  return next_u64() % n;
}

RngState RngState::split(std::uint64_t stream) const {
  return RngState{splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)), 0};
}

RaySamples sample_ray_regular(const Ray& ray, int count) {
  check_count(count);
  const double width = (ray.t_far - ray.t_near) / count;
  std::vector<double> t(count);
  for (int j = 0; j < count; ++j) t[j] = ray.t_near + (j + 0.5) * width;
  return make_samples(ray, std::move(t));
}

RaySamples sample_ray_stratified(const Ray& ray, int count, RngState& rng) {
  check_count(count);
  std::vector<double> offsets(count);
  for (double& u : offsets) u = rng.next_uniform();
  return sample_ray_stratified(ray, offsets);
}

RaySamples sample_ray_stratified(const Ray& ray, std::span<const double> offsets) {
  const int count = static_cast<int>(offsets.size());
  check_count(count);
  const double width = (ray.t_far - ray.t_near) / count;
  std::vector<double> t(count);
  for (int j = 0; j < count; ++j) {
    if (!(offsets[j] >= 0.0 && offsets[j] < 1.0)) {
      throw std::domain_error("stratified offsets must lie in [0, 1)");
    }
    t[j] = ray.t_near + (j + offsets[j]) * width;
  }
  return make_samples(ray, std::move(t));
}

GridSamples sample_uniform_grid(const ContractionConfig& roi, GridResolution resolution) {
  if (resolution.x < 1 || resolution.y < 1 || resolution.z < 1) {
    throw std::domain_error("grid resolution must be at least 1 on every axis");
  }
  GridSamples grid;
  grid.resolution = resolution;
  grid.roi_min = roi.roi_min;
  grid.roi_max = roi.roi_max;
  const Vec3 extent = roi.roi_max - roi.roi_min;
  const Vec3 pitch(extent.x() / resolution.x, extent.y() / resolution.y, extent.z() / resolution.z);
  grid.points.reserve(resolution.count());
  for (int k = 0; k < resolution.z; ++k) {
    for (int j = 0; j < resolution.y; ++j) {
      for (int i = 0; i < resolution.x; ++i) {
        grid.points.emplace_back(roi.roi_min.x() + (i + 0.5) * pitch.x(),
                                 roi.roi_min.y() + (j + 0.5) * pitch.y(),
                                 roi.roi_min.z() + (k + 0.5) * pitch.z());
      }
    }
  }
  return grid;
}

}  // namespace nerp
