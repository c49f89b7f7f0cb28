#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rwgan/errors.hpp"
#include "rwgan/raster_types.hpp"
#include "rwgan/tensor.hpp"

namespace rwgan::raster {

// ---------------------------------------------------------------------------
// Palettes

struct PaletteClass {
  std::string name;
  Rgb color;

  friend bool operator==(const PaletteClass&, const PaletteClass&) = default;
};

struct Palette {
  std::vector<PaletteClass> classes; // must include `background` and `runway`

  void validate() const {
    bool has_runway = false;
    for (size_t i = 0; i < classes.size(); ++i) {
      if (classes[i].name == "runway") has_runway = true;
      for (size_t j = i + 1; j < classes.size(); ++j)
        if (classes[i].color == classes[j].color)
          throw ConfigError("palette: duplicate color for classes '" +
                            classes[i].name + "' and '" + classes[j].name + "'");
    }
    if (!has_runway) throw ConfigError("palette: missing required class 'runway'");
  }

  Rgb color_of(const std::string& name) const {
    for (const auto& c : classes)
      if (c.name == name) return c.color;
    throw ConfigError("palette: no class named '" + name + "'");
  }

  bool has_class(const std::string& name) const {
    for (const auto& c : classes)
      if (c.name == name) return true;
    return false;
  }

  // Index of the class nearest to `c` in Euclidean RGB; ties break toward the
  // earlier class in the list.
  size_t nearest_class(Rgb c) const {
    size_t best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (size_t i = 0; i < classes.size(); ++i) {
      double d = color_distance(c, classes[i].color);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  friend bool operator==(const Palette&, const Palette&) = default;
};

// Tan-grey family used by commercial map tiles. Note the classes sit within
// ~12 RGB units of each other, so distance-threshold binarization of these
// maps needs tol < 12.
inline Palette standard_palette() {
  return Palette{{{"background", {242, 239, 233}},
                  {"runway", {232, 232, 232}},
                  {"border", {200, 200, 200}}}};
}

// High-contrast variant for sharper runway boundaries.
inline Palette redblack_palette() {
  return Palette{{{"background", {0, 0, 0}}, {"runway", {255, 0, 0}}}};
}

// Extra classes for the multi-class (urban) scenes.
inline Palette urban_palette() {
  return Palette{{{"background", {242, 239, 233}},
                  {"runway", {160, 160, 164}},
                  {"building", {208, 204, 196}},
                  {"road", {255, 255, 255}}}};
}

inline Palette palette_by_name(const std::string& name) {
  if (name == "standard") return standard_palette();
  if (name == "redblack") return redblack_palette();
  if (name == "urban") return urban_palette();
  throw ConfigError("palette: unknown palette name '" + name + "'");
}

struct PaletteMap {
  struct Entry {
    Rgb from;
    Rgb to;
  };
  std::vector<Entry> entries;

  void validate() const {
    for (size_t i = 0; i < entries.size(); ++i)
      for (size_t j = i + 1; j < entries.size(); ++j)
        if (entries[i].from == entries[j].from)
          throw ConfigError("palette map: duplicate 'from' color");
  }

  PaletteMap inverse() const {
    PaletteMap inv;
    for (const auto& e : entries) inv.entries.push_back({e.to, e.from});
    inv.validate();
    return inv;
  }
};

// Class-by-class map between two palettes; classes present in both are
// mapped, anything else falls back to the background mapping.
inline PaletteMap palette_map_between(const Palette& from, const Palette& to) {
  PaletteMap map;
  const Rgb to_bg = to.has_class("background") ? to.color_of("background")
                                               : to.classes.at(0).color;
  for (const auto& c : from.classes)
    map.entries.push_back(
        {c.color, to.has_class(c.name) ? to.color_of(c.name) : to_bg});
  map.validate();
  return map;
}

inline nlohmann::json palette_to_json(const Palette& p) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : p.classes)
    classes.push_back({{"name", c.name},
                       {"color", {c.color[0], c.color[1], c.color[2]}}});
  return {{"classes", classes}};
}

inline Palette palette_from_json(const nlohmann::json& j) {
  Palette p;
  for (const auto& c : j.at("classes")) {
    auto col = c.at("color");
    p.classes.push_back({c.at("name").get<std::string>(),
                         {col.at(0).get<uint8_t>(), col.at(1).get<uint8_t>(),
                          col.at(2).get<uint8_t>()}});
  }
  p.validate();
  return p;
}

inline nlohmann::json palette_map_to_json(const PaletteMap& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"from", {e.from[0], e.from[1], e.from[2]}},
                       {"to", {e.to[0], e.to[1], e.to[2]}}});
  return {{"entries", entries}};
}

inline PaletteMap palette_map_from_json(const nlohmann::json& j) {
  PaletteMap m;
  for (const auto& e : j.at("entries")) {
    auto f = e.at("from");
    auto t = e.at("to");
    m.entries.push_back({{f.at(0).get<uint8_t>(), f.at(1).get<uint8_t>(),
                          f.at(2).get<uint8_t>()},
                         {t.at(0).get<uint8_t>(), t.at(1).get<uint8_t>(),
                          t.at(2).get<uint8_t>()}});
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Geometry ops

// Bilinear resampling with half-pixel-center alignment:
// src = (dst + 0.5) * (src_size / dst_size) - 0.5, edge-clamped.
inline RasterImage resize_bilinear(const RasterImage& img, int w, int h) {
  if (w < 1 || h < 1) throw ShapeError("resize: target dimensions must be >= 1");
  if (w == img.width && h == img.height) return img;
  RasterImage out(w, h);
  const double sx = double(img.width) / double(w);
  const double sy = double(img.height) / double(h);
  for (int y = 0; y < h; ++y) {
    double fy = (double(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(img.height - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - double(y0);
    for (int x = 0; x < w; ++x) {
      double fx = (double(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(img.width - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - double(x0);
      const Rgb p00 = img.at(x0, y0), p10 = img.at(x1, y0);
      const Rgb p01 = img.at(x0, y1), p11 = img.at(x1, y1);
      Rgb o;
      for (int c = 0; c < 3; ++c) {
        const double top = double(p00[c]) * (1.0 - wx) + double(p10[c]) * wx;
        const double bot = double(p01[c]) * (1.0 - wx) + double(p11[c]) * wx;
        const double v = top * (1.0 - wy) + bot * wy;
        o[c] = uint8_t(std::clamp(std::lround(v), 0L, 255L));
      }
      out.set(x, y, o);
    }
  }
  return out;
}

// a on the left, b on the right; width doubles.
inline RasterImage join_pair(const RasterImage& a, const RasterImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("join_pair: dimension mismatch");
  RasterImage out(a.width * 2, a.height);
  for (int y = 0; y < a.height; ++y) {
    std::copy_n(a.pixels.data() + size_t(y) * a.width * 3, size_t(a.width) * 3,
                out.pixels.data() + size_t(y) * out.width * 3);
    std::copy_n(b.pixels.data() + size_t(y) * b.width * 3, size_t(b.width) * 3,
                out.pixels.data() + (size_t(y) * out.width + a.width) * 3);
  }
  return out;
}

// Horizontal strip of equally sized images (montage for progress samples).
inline RasterImage hstack(const std::vector<RasterImage>& imgs) {
  if (imgs.empty()) throw ShapeError("hstack: no images");
  const int w = imgs[0].width, h = imgs[0].height;
  for (const auto& im : imgs)
    if (im.width != w || im.height != h)
      throw ShapeError("hstack: dimension mismatch");
  RasterImage out(w * int(imgs.size()), h);
  for (size_t k = 0; k < imgs.size(); ++k)
    for (int y = 0; y < h; ++y)
      std::copy_n(imgs[k].pixels.data() + size_t(y) * w * 3, size_t(w) * 3,
                  out.pixels.data() + (size_t(y) * out.width + k * w) * 3);
  return out;
}

inline std::pair<RasterImage, RasterImage> split_pair(const RasterImage& img) {
  if (img.width % 2 != 0)
    throw ShapeError("split_pair: width must be even, got " +
                     std::to_string(img.width));
  const int half = img.width / 2;
  RasterImage a(half, img.height), b(half, img.height);
  for (int y = 0; y < img.height; ++y) {
    std::copy_n(img.pixels.data() + size_t(y) * img.width * 3, size_t(half) * 3,
                a.pixels.data() + size_t(y) * half * 3);
    std::copy_n(img.pixels.data() + (size_t(y) * img.width + half) * 3,
                size_t(half) * 3, b.pixels.data() + size_t(y) * half * 3);
  }
  return {std::move(a), std::move(b)};
}

// With snap off, only pixels exactly equal to a `from` color change. With
// snap on, every pixel is first replaced by its nearest `from` color.
inline RasterImage remap_palette(const RasterImage& img, const PaletteMap& map,
                                 bool snap = false) {
  map.validate();
  RasterImage out = img;
  if (map.entries.empty()) return out;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      Rgb c = img.at(x, y);
      if (snap) {
        size_t best = 0;
        double best_d = std::numeric_limits<double>::max();
        for (size_t i = 0; i < map.entries.size(); ++i) {
          double d = color_distance(c, map.entries[i].from);
          if (d < best_d) {
            best_d = d;
            best = i;
          }
        }
        out.set(x, y, map.entries[best].to);
        continue;
      }
      for (const auto& e : map.entries)
        if (c == e.from) {
          out.set(x, y, e.to);
          break;
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Tensor bridge

// Image -> 1x3xHxW tensor, channel value v -> v/127.5 - 1.
template <class S = float>
TensorT<S> to_unit(const RasterImage& img, bool requires_grad = false) {
  std::vector<S> data(size_t(3) * img.height * img.width);
  const size_t plane = size_t(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const size_t i = size_t(y) * img.width + x;
      const Rgb c = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch)
        data[size_t(ch) * plane + i] = S(c[ch]) / S(127.5) - S(1);
    }
  return TensorT<S>::from_values({1, 3, img.height, img.width}, std::move(data),
                                 requires_grad);
}

// 1x3xHxW tensor in [-1,1] -> image, x -> round(clamp(x,-1,1)*127.5 + 127.5).
template <class S = float>
RasterImage from_unit(const TensorT<S>& t) {
  if (t.shape().size() != 4 || t.shape()[0] != 1 || t.shape()[1] != 3)
    throw ShapeError("from_unit: expected 1x3xHxW tensor, got " +
                     shape_str(t.shape()));
  const int h = int(t.shape()[2]), w = int(t.shape()[3]);
  const size_t plane = size_t(h) * w;
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = size_t(y) * w + x;
      Rgb c;
      for (int ch = 0; ch < 3; ++ch) {
        double v = double(t.values()[size_t(ch) * plane + i]);
        v = std::clamp(v, -1.0, 1.0) * 127.5 + 127.5;
        c[ch] = uint8_t(std::clamp(std::lround(v), 0L, 255L));
      }
      img.set(x, y, c);
    }
  return img;
}

// ---------------------------------------------------------------------------
// Masks

// Bit set where the pixel lies within `tol` (Euclidean RGB) of the palette's
// runway color.
inline Mask binarize_runway(const RasterImage& img, const Palette& palette,
                            double tol) {
  if (tol < 0) throw ConfigError("binarize: tol must be >= 0");
  const Rgb runway = palette.color_of("runway");
  Mask mask(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      mask.set(x, y, color_distance(img.at(x, y), runway) <= tol);
  return mask;
}

struct MaskDiff {
  double iou = 1.0; // 1.0 when both masks are empty
  Mask added;       // in b, not in a
  Mask removed;     // in a, not in b
  RasterImage diff_image;
};

inline constexpr Rgb kDiffAdded = {0, 200, 0};
inline constexpr Rgb kDiffRemoved = {220, 0, 0};
inline constexpr Rgb kDiffBoth = {120, 120, 120};
inline constexpr Rgb kDiffNeither = {235, 235, 235};

inline MaskDiff compare_masks(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("compare_masks: dimension mismatch");
  MaskDiff d;
  d.added = Mask(a.width, a.height);
  d.removed = Mask(a.width, a.height);
  d.diff_image = RasterImage(a.width, a.height);
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    const bool av = a.bits[i] != 0, bv = b.bits[i] != 0;
    inter += (av && bv);
    uni += (av || bv);
    d.added.bits[i] = (!av && bv) ? 1 : 0;
    d.removed.bits[i] = (av && !bv) ? 1 : 0;
    Rgb c = kDiffNeither;
    if (av && bv) c = kDiffBoth;
    else if (bv) c = kDiffAdded;
    else if (av) c = kDiffRemoved;
    d.diff_image.pixels[i * 3] = c[0];
    d.diff_image.pixels[i * 3 + 1] = c[1];
    d.diff_image.pixels[i * 3 + 2] = c[2];
  }
  d.iou = uni == 0 ? 1.0 : double(inter) / double(uni);
  return d;
}

inline RasterImage mask_to_image(const Mask& m) {
  RasterImage img(m.width, m.height);
  for (size_t i = 0; i < m.bits.size(); ++i) {
    const uint8_t v = m.bits[i] ? 255 : 0;
    img.pixels[i * 3] = v;
    img.pixels[i * 3 + 1] = v;
    img.pixels[i * 3 + 2] = v;
  }
  return img;
}

inline Mask image_to_mask(const RasterImage& img) {
  Mask m(img.width, img.height);
  for (size_t i = 0; i < m.bits.size(); ++i)
    m.bits[i] = img.pixels[i * 3] > 127 ? 1 : 0;
  return m;
}

} // namespace rwgan::raster
