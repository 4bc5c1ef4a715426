#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvu {

// Interleaved row-major float image, top row first, values nominally in [0,1].
struct ImageF {
  int width = 0, height = 0, channels = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, int c) : width(w), height(h), channels(c),
                                data(static_cast<size_t>(w) * h * c, 0.f) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool same_dims(const ImageF& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

struct Mask {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // 1 = masked (distractor visible)

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, 0) {}

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t count() const {
    size_t n = 0;
    for (uint8_t v : data) n += v ? 1 : 0;
    return n;
  }
};

// Lossless float image storage (PFM, little-endian, bottom-up rows).
void write_pfm(const std::string& path, const ImageF& img);
ImageF read_pfm(const std::string& path);

// 1-bit masks (PBM P4, bit 1 = masked).
void write_pbm(const std::string& path, const Mask& mask);
Mask read_pbm(const std::string& path);

// 8-bit previews: PPM P6 for 3-channel, PGM P5 for 1-channel. Values clamped
// to [0,1] and quantized; not used where losslessness matters.
void write_ppm(const std::string& path, const ImageF& img);
void write_pgm(const std::string& path, const ImageF& gray);

}  // namespace mvu
