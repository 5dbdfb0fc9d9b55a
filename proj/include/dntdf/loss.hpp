#pragma once

// Edge-weighted binary cross entropy. The weight map alpha is the absolute
// difference between each ground-truth pixel and the mean of its
// (2*delta+1)^2 neighborhood (mirror padding), so weights concentrate along
// mask boundaries. The loss is the alpha-weighted BCE, normalized by the
// total weight by default so its scale is resolution-independent.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dntdf/tensor.hpp"

namespace dntdf {

struct LossConfig {
  double gamma = 3.0;     // weight amplitude: w = 1 + gamma * alpha
  int delta = 10;         // window radius
  double eps = 1e-6;      // probability clamp before the log terms
  bool normalize = true;  // divide by the total weight

  void validate() const {
    require(gamma >= 0.0, "loss config: gamma must be >= 0, got ", gamma);
    require(delta >= 1, "loss config: delta must be >= 1, got ", delta);
    require(eps > 0.0 && eps < 0.5, "loss config: eps must lie in (0, 0.5)");
  }
};

namespace detail {

// Mirror an out-of-range coordinate back into [0, n): one reflection without
// repeating the border pixel, then clamping for radii beyond the extent.
inline int reflect_index(int t, int n) {
  if (t < 0) t = -t;
  if (t >= n) t = 2 * (n - 1) - t;
  if (t < 0) t = 0;
  if (t >= n) t = n - 1;
  return t;
}

// Window sums of a binary plane via an integral image over the mirror-padded
// extent. Integer arithmetic keeps alpha exactly symmetric under mask
// complement: alpha = |S - y*A| / A with S and A integers.
template <class S>
void alpha_plane(const S* y, int h, int w, int delta, double* out) {
  const int ph = h + 2 * delta, pw = w + 2 * delta;
  std::vector<std::int64_t> integral(std::size_t(ph + 1) * (pw + 1), 0);
  for (int i = 0; i < ph; ++i) {
    const S* row = y + std::size_t(reflect_index(i - delta, h)) * w;
    std::int64_t run = 0;
    for (int j = 0; j < pw; ++j) {
      const S v = row[reflect_index(j - delta, w)];
      require(v == S(0) || v == S(1),
              "alpha: ground truth must be binary, found ", double(v));
      run += v == S(1) ? 1 : 0;
      integral[std::size_t(i + 1) * (pw + 1) + (j + 1)] =
          integral[std::size_t(i) * (pw + 1) + (j + 1)] + run;
    }
  }
  const std::int64_t area = std::int64_t(2 * delta + 1) * (2 * delta + 1);
  auto rect = [&](int i0, int j0, int i1, int j1) {  // half-open, padded
    return integral[std::size_t(i1) * (pw + 1) + j1] -
           integral[std::size_t(i0) * (pw + 1) + j1] -
           integral[std::size_t(i1) * (pw + 1) + j0] +
           integral[std::size_t(i0) * (pw + 1) + j0];
  };
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::int64_t sum = rect(i, j, i + 2 * delta + 1, j + 2 * delta + 1);
      const std::int64_t num =
          y[std::size_t(i) * w + j] == S(1) ? area - sum : sum;
      out[std::size_t(i) * w + j] = double(num) / double(area);
    }
}

}  // namespace detail

// Weight map alpha for a binary mask tensor, computed per (batch, channel)
// plane. Values lie in [0, 1]; constant neighborhoods yield exactly 0.
template <class S>
TensorT<S> edge_weight_alpha(const TensorT<S>& y, int delta) {
  require(delta >= 1, "alpha: delta must be >= 1, got ", delta);
  const Shape s = y.shape();
  TensorT<S> a(s);
  std::vector<double> plane(std::size_t(s.h) * s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (std::size_t(n) * s.c + c) * s.h * s.w;
      detail::alpha_plane(y.vec().data() + off, s.h, s.w, delta,
                          plane.data());
      for (std::size_t k = 0; k < plane.size(); ++k)
        a.mutable_vec()[off + k] = S(plane[k]);
    }
  return a;
}

// Scalar loss: sum_i (1 + gamma*alpha_i) * BCE(clamp(p_i), y_i), divided by
// the total weight when cfg.normalize is set. Differentiable w.r.t. p; the
// gradient is exactly zero where the clamp is active.
template <class S>
TensorT<S> weighted_bce(const TensorT<S>& p, const TensorT<S>& y,
                        const LossConfig& cfg = {}) {
  cfg.validate();
  require(p.shape() == y.shape(), "weighted_bce: prediction ",
          p.shape().str(), " vs ground truth ", y.shape().str());
  const Shape s = p.shape();

  std::vector<double> alpha(std::size_t(s.numel()));
  {
    std::vector<double> plane(std::size_t(s.h) * s.w);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = (std::size_t(n) * s.c + c) * s.h * s.w;
        detail::alpha_plane(y.vec().data() + off, s.h, s.w, cfg.delta,
                            plane.data());
        for (std::size_t k = 0; k < plane.size(); ++k)
          alpha[off + k] = plane[k];
      }
  }

  const auto& pv = p.vec();
  const auto& yv = y.vec();
  const double lo = cfg.eps, hi = 1.0 - cfg.eps;
  double weighted = 0.0, total_weight = 0.0;
  // Per-element gradient factors, shared with the backward closure.
  auto dfactors = std::make_shared<std::vector<double>>(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double raw = double(pv[i]);
    const double q = raw < lo ? lo : (raw > hi ? hi : raw);
    const double yi = double(yv[i]);
    const double w = 1.0 + cfg.gamma * alpha[i];
    weighted += w * -(yi * std::log(q) + (1.0 - yi) * std::log(1.0 - q));
    total_weight += w;
    (*dfactors)[i] =
        raw < lo || raw > hi ? 0.0 : w * (q - yi) / (q * (1.0 - q));
  }
  const double denom = cfg.normalize ? total_weight : 1.0;
  const double value = weighted / denom;

  TensorT<S> out(Shape{1, 1, 1, 1}, S(value));
  if (auto* tp = TapeT<S>::current()) {
    const int pi = p.node_on(*tp);
    if (pi >= 0) {
      const int oi = tp->record(
          "weighted_bce", {pi}, 1,
          [pi, dfactors, denom](TapeT<S>& t, const std::vector<S>& g) {
            auto& gp = t.grad_buf(pi);
            const double g0 = double(g[0]);
            for (std::size_t i = 0; i < gp.size(); ++i)
              gp[i] += S(g0 * (*dfactors)[i] / denom);
          });
      out.bind_node(*tp, oi);
    }
  }
  return out;
}

}  // namespace dntdf
