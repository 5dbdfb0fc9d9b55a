#pragma once

// Synthetic salient-object data: 1-3 filled ellipses/rectangles with a mean
// color distinct from a low-frequency noise background; the mask is the
// union of the shapes. Each sample derives its own generator state from
// (seed, index), so datasets are byte-identical across runs and sample i is
// independent of how many samples are requested.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dntdf/data.hpp"
#include "dntdf/ops.hpp"
#include "dntdf/rng.hpp"

namespace dntdf {

// SplitMix-style avalanche; decorrelates nearby (seed, index) pairs.
inline std::uint32_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return std::uint32_t(z ^ (z >> 31));
}

namespace detail {

inline float clamp01(double v) {
  return float(std::min(1.0, std::max(0.0, v)));
}

// Low-frequency background: a coarse random color grid around a base color,
// bilinearly interpolated up to full resolution.
inline Tensor synth_background(int size, Rng& rng, float base[3]) {
  const int grid = 5;
  Tensor coarse(Shape{1, 3, grid, grid});
  auto& cv = coarse.mutable_vec();
  for (int c = 0; c < 3; ++c) {
    base[c] = float(rng.uniform(0.25, 0.75));
    for (int i = 0; i < grid * grid; ++i)
      cv[std::size_t(c) * grid * grid + std::size_t(i)] =
          clamp01(double(base[c]) + rng.uniform(-0.15, 0.15));
  }
  return bilinear_resize(coarse, size, size);
}

inline bool synth_attempt(int size, Rng& rng, Sample& out) {
  float base[3];
  Tensor image = synth_background(size, rng, base);
  Tensor mask(Shape{1, 1, size, size});
  auto& iv = image.mutable_vec();
  auto& mv = mask.mutable_vec();
  const std::size_t plane = std::size_t(size) * size;

  const int shapes = 1 + rng.below(3);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = rng.chance(0.5);
    const double cx = rng.uniform(0.25, 0.75) * size;
    const double cy = rng.uniform(0.25, 0.75) * size;
    const double ax = rng.uniform(0.10, 0.28) * size;
    const double ay = rng.uniform(0.10, 0.28) * size;
    float color[3];
    for (int c = 0; c < 3; ++c) {
      const double off = (rng.chance(0.5) ? 1.0 : -1.0) * rng.uniform(0.25, 0.45);
      color[c] = clamp01(double(base[c]) + off);
    }
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        const double dy = (i + 0.5 - cy) / ay, dx = (j + 0.5 - cx) / ax;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        const std::size_t at = std::size_t(i) * size + j;
        mv[at] = 1.0f;
        for (int c = 0; c < 3; ++c)
          iv[std::size_t(c) * plane + at] =
              clamp01(double(color[c]) + rng.uniform(-0.04, 0.04));
      }
  }

  std::int64_t fg = 0;
  for (float v : mv) fg += v == 1.0f ? 1 : 0;
  const double fraction = double(fg) / double(plane);
  if (fraction < 0.05 || fraction > 0.6) return false;
  out.image = std::move(image);
  out.mask = std::move(mask);
  return true;
}

}  // namespace detail

inline std::vector<Sample> synth_generate(int n, int size,
                                          std::uint32_t seed) {
  require(n >= 1, "synth: need at least one sample, got ", n);
  require(size >= 32 && size % 32 == 0, "synth: size must be a positive multiple of 32, got ", size);
  std::vector<Sample> out;
  out.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, std::uint64_t(i)));
    Sample s;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt)
      ok = detail::synth_attempt(size, rng, s);
    require(ok, "synth: could not hit the foreground-fraction window for sample ", i);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06d", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dntdf
