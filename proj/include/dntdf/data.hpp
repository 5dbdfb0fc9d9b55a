#pragma once

// Dataset plumbing: the Sample record, netpbm <-> tensor conversion, size
// normalization to multiples of 32 (center crop for excess, centered pad for
// shortfall), directory pairing by basename, and training-time augmentation
// (horizontal flip + multi-scale resize that preserves mask binarity).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dntdf/netpbm.hpp"
#include "dntdf/ops.hpp"
#include "dntdf/rng.hpp"
#include "dntdf/tensor.hpp"

namespace dntdf {

struct Sample {
  Tensor image;  // (1, 3, h, w), values in [0, 1]
  Tensor mask;   // (1, 1, h, w), values in {0, 1}
  std::string id;
};

// ---------------------------------------------------------------------------
// netpbm <-> tensor conversion.

inline Tensor image_to_tensor(const PnmImage& img, const std::string& what) {
  require(img.channels == 3, what, ": images must be P6 (RGB)");
  Tensor t(Shape{1, 3, img.height, img.width});
  auto& v = t.mutable_vec();
  const std::size_t plane = std::size_t(img.height) * img.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      v[std::size_t(c) * plane + i] =
          float(img.data[i * 3 + std::size_t(c)]) / float(img.maxval);
  return t;
}

// Mask binarization: sample value >= 128 reads as foreground.
inline Tensor mask_to_tensor(const PnmImage& img, const std::string& what) {
  require(img.channels == 1, what, ": masks must be P5 (grayscale)");
  Tensor t(Shape{1, 1, img.height, img.width});
  auto& v = t.mutable_vec();
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = img.data[i] >= 128 ? 1.0f : 0.0f;
  return t;
}

inline std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t) {
  std::vector<std::uint8_t> bytes(t.numel());
  const auto& v = t.vec();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = std::min(1.0, std::max(0.0, double(v[i])));
    bytes[i] = std::uint8_t(std::lround(255.0 * x));
  }
  return bytes;
}

// ---------------------------------------------------------------------------
// Size normalization.

// Nearest multiple of m, at least m; ties round up (pad rather than crop).
inline int round_to_multiple(int x, int m) {
  require(x >= 1 && m >= 1, "round_to_multiple: degenerate input");
  return std::max(m, (x + m / 2) / m * m);
}

// Center crop/pad in both spatial directions; source centers stay centered,
// with crop and pad offsets both floor((difference)/2).
inline Tensor crop_pad(const Tensor& x, int out_h, int out_w, float fill) {
  const Shape s = x.shape();
  if (s.h == out_h && s.w == out_w) return x;
  Tensor y(Shape{s.n, s.c, out_h, out_w}, fill);
  const int copy_h = std::min(s.h, out_h), copy_w = std::min(s.w, out_w);
  const int src_i = (s.h - copy_h) / 2, src_j = (s.w - copy_w) / 2;
  const int dst_i = (out_h - copy_h) / 2, dst_j = (out_w - copy_w) / 2;
  const auto& xv = x.vec();
  auto& yv = y.mutable_vec();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < copy_h; ++i) {
        const std::size_t src =
            ((std::size_t(n) * s.c + c) * s.h + (src_i + i)) * s.w + src_j;
        const std::size_t dst =
            ((std::size_t(n) * s.c + c) * out_h + (dst_i + i)) * out_w +
            dst_j;
        std::copy(xv.begin() + src, xv.begin() + src + copy_w,
                  yv.begin() + dst);
      }
  return y;
}

// Crops/pads a sample to the nearest multiple-of-32 extent. Images pad with
// neutral gray, masks with background.
inline Sample normalize_size(Sample s) {
  const Shape is = s.image.shape();
  const int th = round_to_multiple(is.h, 32), tw = round_to_multiple(is.w, 32);
  s.image = crop_pad(s.image, th, tw, 0.5f);
  s.mask = crop_pad(s.mask, th, tw, 0.0f);
  return s;
}

// ---------------------------------------------------------------------------
// Directory IO: files pair by basename (extension stripped), ids sorted.

namespace detail {

inline std::map<std::string, std::filesystem::path> list_dir(
    const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), "dataset: '", dir, "' is not a directory");
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string base = entry.path().stem().string();
    require(!files.count(base), "dataset: duplicate basename '", base,
            "' in '", dir, "'");
    files[base] = entry.path();
  }
  return files;
}

}  // namespace detail

inline std::vector<Sample> load_samples(const std::string& image_dir,
                                        const std::string& mask_dir) {
  const auto images = detail::list_dir(image_dir);
  const auto masks = detail::list_dir(mask_dir);
  for (const auto& [base, path] : masks)
    require(images.count(base), "load_samples: no image for basename '", base,
            "'");
  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& [base, path] : images) {
    const auto m = masks.find(base);
    require(m != masks.end(), "load_samples: no mask for basename '", base,
            "'");
    Sample s;
    s.id = base;
    s.image = image_to_tensor(read_pnm(path.string()), "load_samples");
    s.mask = mask_to_tensor(read_pnm(m->second.string()), "load_samples");
    const Shape a = s.image.shape(), b = s.mask.shape();
    require(a.h == b.h && a.w == b.w, "load_samples: '", base, "' image ",
            a.str(), " and mask ", b.str(), " sizes differ");
    out.push_back(normalize_size(std::move(s)));
  }
  require(!out.empty(), "load_samples: no samples in '", image_dir, "'");
  return out;
}

// Images without masks, already size-normalized — the prediction input.
inline std::vector<Sample> load_images(const std::string& image_dir) {
  std::vector<Sample> out;
  for (const auto& [base, path] : detail::list_dir(image_dir)) {
    Sample s;
    s.id = base;
    s.image = image_to_tensor(read_pnm(path.string()), "load_images");
    const Shape is = s.image.shape();
    s.mask = Tensor(Shape{1, 1, is.h, is.w});
    out.push_back(normalize_size(std::move(s)));
  }
  require(!out.empty(), "load_images: no images in '", image_dir, "'");
  return out;
}

inline void save_dataset(const std::vector<Sample>& samples,
                         const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path images = fs::path(dir) / "images";
  const fs::path masks = fs::path(dir) / "masks";
  fs::create_directories(images);
  fs::create_directories(masks);
  for (const Sample& s : samples) {
    const Shape is = s.image.shape();
    // Planar floats -> interleaved bytes.
    std::vector<std::uint8_t> rgb(std::size_t(3) * is.h * is.w);
    const std::size_t plane = std::size_t(is.h) * is.w;
    const auto& iv = s.image.vec();
    for (std::size_t i = 0; i < plane; ++i)
      for (int c = 0; c < 3; ++c) {
        const double x = std::min(
            1.0, std::max(0.0, double(iv[std::size_t(c) * plane + i])));
        rgb[i * 3 + std::size_t(c)] = std::uint8_t(std::lround(255.0 * x));
      }
    write_ppm((images / (s.id + ".ppm")).string(), is.w, is.h, rgb.data());
    const std::vector<std::uint8_t> m = tensor_to_bytes(s.mask);
    write_pgm((masks / (s.id + ".pgm")).string(), is.w, is.h, m.data());
  }
}

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentConfig {
  bool flip = true;
  std::vector<float> scales = {0.8f, 0.9f, 1.0f, 1.1f, 1.2f};

  void validate() const {
    require(!scales.empty(), "augment: scale set must be non-empty");
    for (float s : scales)
      require(s > 0.0f, "augment: scales must be positive, got ", double(s));
  }
};

inline Tensor flip_horizontal(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y(s);
  const auto& xv = x.vec();
  auto& yv = y.mutable_vec();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i) {
        const std::size_t row =
            ((std::size_t(n) * s.c + c) * s.h + i) * s.w;
        for (int j = 0; j < s.w; ++j) yv[row + j] = xv[row + (s.w - 1 - j)];
      }
  return y;
}

// Nearest-neighbor resize with half-pixel centers; binary inputs stay binary.
inline Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
  const Shape s = x.shape();
  require(out_h >= 1 && out_w >= 1, "resize_nearest: degenerate target");
  if (s.h == out_h && s.w == out_w) return x;
  Tensor y(Shape{s.n, s.c, out_h, out_w});
  const auto& xv = x.vec();
  auto& yv = y.mutable_vec();
  for (int i = 0; i < out_h; ++i)
    for (int j = 0; j < out_w; ++j) {
      int si = int((double(i) + 0.5) * s.h / out_h);
      int sj = int((double(j) + 0.5) * s.w / out_w);
      si = std::min(si, s.h - 1);
      sj = std::min(sj, s.w - 1);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
          yv[((std::size_t(n) * s.c + c) * out_h + i) * out_w + j] =
              xv[((std::size_t(n) * s.c + c) * s.h + si) * s.w + sj];
    }
  return y;
}

// Random horizontal flip (p = 0.5) and one scale drawn uniformly from the
// configured set; the scaled pair is cropped/padded back to its original
// extent so every augmented sample keeps the model's input size.
inline Sample augment(const Sample& sample, const AugmentConfig& cfg,
                      Rng& rng) {
  cfg.validate();
  Sample out;
  out.id = sample.id;
  out.image = sample.image;
  out.mask = sample.mask;
  if (cfg.flip && rng.chance(0.5)) {
    out.image = flip_horizontal(out.image);
    out.mask = flip_horizontal(out.mask);
  }
  const float scale = cfg.scales[std::size_t(rng.below(int(cfg.scales.size())))];
  const Shape is = out.image.shape();
  const int nh = std::max(1, int(std::lround(double(scale) * is.h)));
  const int nw = std::max(1, int(std::lround(double(scale) * is.w)));
  if (nh != is.h || nw != is.w) {
    out.image = crop_pad(bilinear_resize(out.image, nh, nw), is.h, is.w, 0.5f);
    out.mask = crop_pad(resize_nearest(out.mask, nh, nw), is.h, is.w, 0.0f);
  }
  return out;
}

}  // namespace dntdf
