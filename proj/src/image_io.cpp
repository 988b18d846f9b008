#include "nerp/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nerp/errors.hpp"

namespace nerp {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputFault("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFault("cannot open '" + path + "'");
  return in;
}

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw InputFault("'" + path + "': truncated header");
  return v;
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4] = {};
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw InputFault("'" + path + "': missing " + std::string(magic, 4) + " magic");
  }
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw InputFault("write to '" + path + "' failed");
}

}  // namespace

void write_ppm(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InputFault("PPM export needs 1 or 3 channels");
  auto out = open_out(path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.width) * image.height * 3);
  std::size_t k = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = image.at(y, x, image.channels == 3 ? c : 0);
        const double clamped = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        bytes[k++] = static_cast<unsigned char>(std::lround(clamped * 255.0));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  finish(out, path);
}

Image read_ppm(const std::string& path) {
  auto in = open_in(path);
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P6" || width <= 0 || height <= 0 || maxval != 255) {
    throw InputFault("'" + path + "': not an 8-bit P6 image");
  }
  in.get();
  Image image(height, width, 3);
  std::vector<unsigned char> bytes(image.data.size());
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw InputFault("'" + path + "': truncated pixel data");
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) image.data[i] = bytes[i] / 255.0;
  return image;
}

void write_f32(const std::string& path, const Image& image) {
  auto out = open_out(path);
  out.write("NRPI", 4);
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.channels));
  std::vector<float> values(image.data.begin(), image.data.end());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  finish(out, path);
}

Image read_f32(const std::string& path) {
  auto in = open_in(path);
  expect_magic(in, "NRPI", path);
  const auto h = get_u32(in, path);
  const auto w = get_u32(in, path);
  const auto c = get_u32(in, path);
  Image image(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  std::vector<float> values(image.data.size());
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 4))) {
    throw InputFault("'" + path + "': truncated payload");
  }
  std::copy(values.begin(), values.end(), image.data.begin());
  return image;
}

void write_volume(const std::string& path, const Volume& volume) {
  const std::size_t expected = static_cast<std::size_t>(volume.x) * volume.y * volume.z * volume.channels;
  if (volume.values.size() != expected) throw InputFault("volume payload does not match its shape");
  auto out = open_out(path);
  out.write("NRPV", 4);
  put_u32(out, static_cast<std::uint32_t>(volume.x));
  put_u32(out, static_cast<std::uint32_t>(volume.y));
  put_u32(out, static_cast<std::uint32_t>(volume.z));
  put_u32(out, static_cast<std::uint32_t>(volume.channels));
  out.write(reinterpret_cast<const char*>(volume.values.data()), static_cast<std::streamsize>(expected * 4));
  finish(out, path);
}

Volume read_volume(const std::string& path) {
  auto in = open_in(path);
  expect_magic(in, "NRPV", path);
  Volume v;
  v.x = static_cast<int>(get_u32(in, path));
  v.y = static_cast<int>(get_u32(in, path));
  v.z = static_cast<int>(get_u32(in, path));
  v.channels = static_cast<int>(get_u32(in, path));
  v.values.resize(static_cast<std::size_t>(v.x) * v.y * v.z * v.channels);
  if (!in.read(reinterpret_cast<char*>(v.values.data()), static_cast<std::streamsize>(v.values.size() * 4))) {
    throw InputFault("'" + path + "': truncated payload");
  }
  return v;
}

}  // namespace nerp
