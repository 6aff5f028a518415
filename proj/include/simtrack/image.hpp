#pragma once

// Float image container plus the two on-disk formats used by the tools:
// PFM (portable float map) for frames and PGM for attention dumps.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simtrack/common.hpp"

namespace simtrack {

// Row-major HWC, values in [0,1], 3 channels.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.0) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }

  // Bilinear lookup at continuous pixel coordinates; positions outside the
  // frame read as `pad`.
  double sample(double x, double y, int c, double pad) const {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    auto tap = [&](int yy, int xx) -> double {
      if (yy < 0 || yy >= height || xx < 0 || xx >= width) return pad;
      return at(yy, xx, c);
    };
    double v00 = tap(y0, x0), v01 = tap(y0, x0 + 1);
    double v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
  }
};

namespace detail {

inline void put_le_f32(std::string& out, float v) {
  uint32_t u = std::bit_cast<uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

inline float get_le_f32(const unsigned char* p) {
  uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

}  // namespace detail

// PFM "PF", little-endian (negative scale), bottom-up row order per the spec
// of the format.
inline void save_pfm(const std::filesystem::path& path, const Image& img) {
  std::string out;
  out += "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  out.reserve(out.size() + img.data.size() * 4);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        detail::put_le_f32(out, static_cast<float>(img.at(y, x, c)));
      }
    }
  }
  atomic_write_file(path, out);
}

inline Image load_pfm(const std::filesystem::path& path) {
  std::string s = read_file(path);
  std::istringstream header(s);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  header >> magic >> w >> h >> scale;
  if (magic != "PF" || w <= 0 || h <= 0) {
    throw std::runtime_error("not a color PFM file: " + path.string());
  }
  if (scale > 0) throw std::runtime_error("big-endian PFM unsupported: " + path.string());
  size_t pos = static_cast<size_t>(header.tellg());
  pos += 1;  // single whitespace after scale
  size_t need = static_cast<size_t>(w) * h * 3 * 4;
  if (s.size() < pos + need) throw std::runtime_error("truncated PFM: " + path.string());
  Image img(h, w);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(s.data()) + pos;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = detail::get_le_f32(p);
        p += 4;
      }
    }
  }
  return img;
}

// 8-bit binary PGM, max-normalized. Used for attention map dumps.
inline void save_pgm(const std::filesystem::path& path, const std::vector<double>& grid,
                     int rows, int cols) {
  if (static_cast<int64_t>(grid.size()) != static_cast<int64_t>(rows) * cols) {
    throw std::runtime_error("save_pgm: grid size does not match dims");
  }
  double mx = 0.0;
  for (double v : grid) mx = std::max(mx, v);
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (double v : grid) {
    double n = mx > 0 ? v / mx : 0.0;
    int byte = static_cast<int>(std::lround(n * 255.0));
    out.push_back(static_cast<char>(std::clamp(byte, 0, 255)));
  }
  atomic_write_file(path, out);
}

}  // namespace simtrack
