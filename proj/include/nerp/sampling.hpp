#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "nerp/geometry.hpp"

namespace nerp {

// Counter-based generator: the stream is a pure function of (seed, counter).
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double next_uniform();
  // Standard normal via Box-Muller (consumes two draws).
  double next_normal();
  // Uniform integer in [0, n).
  std::uint64_t next_index(std::uint64_t n);
  // Independent child stream, e.g. one per ray.
  RngState split(std::uint64_t stream) const;
};

struct RaySamples {
  Ray ray;
  std::vector<double> t_values;
  std::vector<Vec3> points;

  std::size_t size() const { return t_values.size(); }
};

struct GridResolution {
  int x = 1;
  int y = 1;
  int z = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
};

// Points are ordered with x fastest, then y, then z: index = (k * Y + j) * X + i.
struct GridSamples {
  GridResolution resolution;
  Vec3 roi_min;
  Vec3 roi_max;
  std::vector<Vec3> points;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * resolution.y + j) * resolution.x + i;
  }
};

RaySamples sample_ray_regular(const Ray& ray, int count);
RaySamples sample_ray_stratified(const Ray& ray, int count, RngState& rng);
// Stratified sampling with explicit per-bin offsets in [0, 1).
RaySamples sample_ray_stratified(const Ray& ray, std::span<const double> offsets);

GridSamples sample_uniform_grid(const ContractionConfig& roi, GridResolution resolution);

}  // namespace nerp
