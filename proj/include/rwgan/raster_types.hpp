#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rwgan/errors.hpp"

namespace rwgan::raster {

using Rgb = std::array<uint8_t, 3>;

struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels; // row-major RGB triples

  RasterImage() = default;
  RasterImage(int w, int h, Rgb fill = {0, 0, 0}) : width(w), height(h) {
    if (w < 1 || h < 1)
      throw ShapeError("raster: image dimensions must be >= 1");
    pixels.resize(size_t(w) * size_t(h) * 3);
    for (size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = fill[0];
      pixels[i + 1] = fill[1];
      pixels[i + 2] = fill[2];
    }
  }

  Rgb at(int x, int y) const {
    const size_t i = (size_t(y) * width + size_t(x)) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }

  void set(int x, int y, Rgb c) {
    const size_t i = (size_t(y) * width + size_t(x)) * 3;
    pixels[i] = c[0];
    pixels[i + 1] = c[1];
    pixels[i + 2] = c[2];
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits; // row-major booleans

  Mask() = default;
  Mask(int w, int h, bool fill = false) : width(w), height(h) {
    if (w < 1 || h < 1) throw ShapeError("raster: mask dimensions must be >= 1");
    bits.assign(size_t(w) * size_t(h), fill ? 1 : 0);
  }

  bool get(int x, int y) const { return bits[size_t(y) * width + size_t(x)] != 0; }
  void set(int x, int y, bool v) { bits[size_t(y) * width + size_t(x)] = v ? 1 : 0; }

  size_t count() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline double color_distance(Rgb a, Rgb b) {
  const double dr = double(a[0]) - double(b[0]);
  const double dg = double(a[1]) - double(b[1]);
  const double db = double(a[2]) - double(b[2]);
  return std::sqrt(dr * dr + dg * dg + db * db);
}

} // namespace rwgan::raster
