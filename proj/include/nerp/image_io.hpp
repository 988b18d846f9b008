#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nerp/image.hpp"

namespace nerp {

// 8-bit binary PPM. Values are clamped to [0, 1]; one-channel images are
// written as gray.
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

// Lossless float image: "NRPI", u32 H, u32 W, u32 C, then H*W*C little-endian float32.
void write_f32(const std::string& path, const Image& image);
Image read_f32(const std::string& path);

// Feature volume: "NRPV", u32 X, u32 Y, u32 Z, u32 C, then little-endian float32
// values with x fastest, then y, then z, channels innermost.
struct Volume {
  int x = 0;
  int y = 0;
  int z = 0;
  int channels = 0;
  std::vector<float> values;

  std::size_t index(int i, int j, int k) const {
    return ((static_cast<std::size_t>(k) * y + j) * x + i) * channels;
  }
};

void write_volume(const std::string& path, const Volume& volume);
Volume read_volume(const std::string& path);

}  // namespace nerp
