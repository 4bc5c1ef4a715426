#include "mvu/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mvu {

namespace {

void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return tok;
}

bool host_little_endian() {
  const uint16_t probe = 1;
  uint8_t b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

}  // namespace

void write_pfm(const std::string& path, const ImageF& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pfm: 1 or 3 channels only");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << (img.channels == 3 ? "PF" : "Pf") << "\n"
      << img.width << " " << img.height << "\n"
      << "-1.0\n";
  // PFM rows run bottom-up.
  std::vector<float> row(static_cast<size_t>(img.width) * img.channels);
  const bool le = host_little_endian();
  for (int y = img.height - 1; y >= 0; --y) {
    std::memcpy(row.data(), &img.data[static_cast<size_t>(y) * img.width * img.channels],
                row.size() * sizeof(float));
    if (!le) {
      for (float& f : row) {
        uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail(path, "write failed");
}

ImageF read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = next_token(in);
  int channels;
  if (magic == "PF")
    channels = 3;
  else if (magic == "Pf")
    channels = 1;
  else
    fail(path, "not a PFM file");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const double scale = std::stod(next_token(in));
  if (w <= 0 || h <= 0) fail(path, "bad dimensions");
  ImageF img(w, h, channels);
  const bool file_le = scale < 0;
  const bool swap = file_le != host_little_endian();
  std::vector<float> row(static_cast<size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) fail(path, "truncated pixel data");
    if (swap) {
      for (float& f : row) {
        uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    }
    std::memcpy(&img.data[static_cast<size_t>(y) * w * channels], row.data(),
                row.size() * sizeof(float));
  }
  return img;
}

void write_pbm(const std::string& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P4\n" << mask.width << " " << mask.height << "\n";
  const int stride = (mask.width + 7) / 8;
  std::vector<uint8_t> row(static_cast<size_t>(stride));
  for (int y = 0; y < mask.height; ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) row[static_cast<size_t>(x >> 3)] |= uint8_t(0x80u >> (x & 7));
    out.write(reinterpret_cast<const char*>(row.data()), stride);
  }
  if (!out) fail(path, "write failed");
}

Mask read_pbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  if (next_token(in) != "P4") fail(path, "not a raw PBM file");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  if (w <= 0 || h <= 0) fail(path, "bad dimensions");
  Mask mask(w, h);
  const int stride = (w + 7) / 8;
  std::vector<uint8_t> row(static_cast<size_t>(stride));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), stride);
    if (!in) fail(path, "truncated bitmap");
    for (int x = 0; x < w; ++x)
      mask.at(y, x) = (row[static_cast<size_t>(x >> 3)] >> (7 - (x & 7))) & 1;
  }
  return mask;
}

namespace {
uint8_t to_byte(float v) {
  v = std::min(std::max(v, 0.f), 1.f);
  return static_cast<uint8_t>(std::lround(v * 255.f));
}
}  // namespace

void write_ppm(const std::string& path, const ImageF& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm: 3 channels required");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<size_t>(x) * 3 + c] = to_byte(img.at(y, x, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

void write_pgm(const std::string& path, const ImageF& gray) {
  if (gray.channels != 1) throw std::invalid_argument("write_pgm: 1 channel required");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << gray.width << " " << gray.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(gray.width));
  for (int y = 0; y < gray.height; ++y) {
    for (int x = 0; x < gray.width; ++x) row[static_cast<size_t>(x)] = to_byte(gray.at(y, x, 0));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

}  // namespace mvu
