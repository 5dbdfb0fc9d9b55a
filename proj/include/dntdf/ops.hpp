#pragma once

// Spatial primitives: 2-D convolution (zero padding), bilinear resize with
// half-pixel centers and edge clamping, and adaptive average pooling. All
// three are differentiable and record tape nodes when tracked.

#include <algorithm>

#include "dntdf/tensor.hpp"

namespace dntdf {

inline int conv_out_extent(int in, int pad, int k, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Valid output range [o0, o1] such that o*stride + kk - pad stays in [0, in).
inline void conv_valid_range(int in, int pad, int stride, int kk, int out,
                             int& o0, int& o1) {
  const int lo = pad - kk;
  o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  o1 = std::min(out - 1, (in - 1 + pad - kk) / stride);
}

template <class S>
void conv2d_accumulate(const S* x, const S* w, S* y, int N, int Ci, int H,
                       int W, int Co, int k, int stride, int pad, int Ho,
                       int Wo) {
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co) {
      S* yp = y + (std::size_t(n) * Co + co) * Ho * Wo;
      for (int ci = 0; ci < Ci; ++ci) {
        const S* xp = x + (std::size_t(n) * Ci + ci) * H * W;
        const S* wp = w + (std::size_t(co) * Ci + ci) * k * k;
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            const S wv = wp[kh * k + kw];
            int oh0, oh1, ow0, ow1;
            conv_valid_range(H, pad, stride, kh, Ho, oh0, oh1);
            conv_valid_range(W, pad, stride, kw, Wo, ow0, ow1);
            for (int oh = oh0; oh <= oh1; ++oh) {
              const S* xrow =
                  xp + std::size_t(oh * stride + kh - pad) * W +
                  (ow0 * stride + kw - pad);
              S* yrow = yp + std::size_t(oh) * Wo + ow0;
              const int len = ow1 - ow0;
              if (stride == 1)
                for (int t = 0; t <= len; ++t) yrow[t] += wv * xrow[t];
              else
                for (int t = 0; t <= len; ++t) yrow[t] += wv * xrow[t * stride];
            }
          }
      }
    }
}

}  // namespace detail

// input (N,Ci,H,W), kernel (Co,Ci,k,k), optional bias (1,Co,1,1).
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel,
                  const TensorT<S>* bias, int stride, int padding) {
  const Shape xs = x.shape(), ks = kernel.shape();
  const int k = ks.h;
  require(k == ks.w, "conv2d: kernel must be square, got ", ks.str());
  require(k == 1 || k == 3, "conv2d: kernel extent must be 1 or 3, got ", k);
  require(stride >= 1, "conv2d: stride must be positive, got ", stride);
  require(padding >= 0, "conv2d: padding must be non-negative, got ", padding);
  require(ks.c == xs.c, "conv2d: input has ", xs.c, " channels but kernel ",
          ks.str(), " expects ", ks.c);
  const int Ho = conv_out_extent(xs.h, padding, k, stride);
  const int Wo = conv_out_extent(xs.w, padding, k, stride);
  require(Ho >= 1 && Wo >= 1, "conv2d: empty output for input ", xs.str(),
          " with k=", k, " stride=", stride, " padding=", padding);
  if (bias)
    require(bias->shape() == Shape(1, ks.n, 1, 1),
            "conv2d: bias shape must be (1,", ks.n, ",1,1), got ",
            bias->shape().str());

  TensorT<S> y(Shape{xs.n, ks.n, Ho, Wo});
  auto& yv = y.mutable_vec();
  if (bias) {
    const auto& bv = bias->vec();
    const std::size_t plane = std::size_t(Ho) * Wo;
    for (int n = 0; n < xs.n; ++n)
      for (int co = 0; co < ks.n; ++co)
        std::fill_n(yv.begin() + (std::size_t(n) * ks.n + co) * plane, plane,
                    bv[co]);
  }
  detail::conv2d_accumulate(x.data(), kernel.data(), yv.data(), xs.n, xs.c,
                            xs.h, xs.w, ks.n, k, stride, padding, Ho, Wo);

  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    const int wi = kernel.node_on(*tp);
    const int bi = bias ? bias->node_on(*tp) : -1;
    if (xi >= 0 || wi >= 0 || bi >= 0) {
      auto xsrc = x.storage();
      auto wsrc = kernel.storage();
      std::vector<int> deps;
      for (int id : {xi, wi, bi})
        if (id >= 0) deps.push_back(id);
      const int N = xs.n, Ci = xs.c, H = xs.h, W = xs.w, Co = ks.n;
      const int s = stride, p = padding;
      const int yi = tp->record(
          "conv2d", std::move(deps), y.numel(),
          [=](TapeT<S>& t, const std::vector<S>& g) {
            if (bi >= 0) {
              auto& gb = t.grad_buf(bi);
              const std::size_t plane = std::size_t(Ho) * Wo;
              for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co) {
                  const S* gp = g.data() + (std::size_t(n) * Co + co) * plane;
                  S acc = S(0);
                  for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                  gb[co] += acc;
                }
            }
            if (wi >= 0) {
              auto& gw = t.grad_buf(wi);
              const S* xd = xsrc->data();
              for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co) {
                  const S* gp = g.data() + (std::size_t(n) * Co + co) * Ho * Wo;
                  for (int ci = 0; ci < Ci; ++ci) {
                    const S* xp = xd + (std::size_t(n) * Ci + ci) * H * W;
                    S* gwp = gw.data() + (std::size_t(co) * Ci + ci) * k * k;
                    for (int kh = 0; kh < k; ++kh)
                      for (int kw = 0; kw < k; ++kw) {
                        int oh0, oh1, ow0, ow1;
                        detail::conv_valid_range(H, p, s, kh, Ho, oh0, oh1);
                        detail::conv_valid_range(W, p, s, kw, Wo, ow0, ow1);
                        S acc = S(0);
                        for (int oh = oh0; oh <= oh1; ++oh) {
                          const S* xrow = xp +
                                          std::size_t(oh * s + kh - p) * W +
                                          (ow0 * s + kw - p);
                          const S* grow = gp + std::size_t(oh) * Wo + ow0;
                          const int len = ow1 - ow0;
                          if (s == 1)
                            for (int t2 = 0; t2 <= len; ++t2)
                              acc += grow[t2] * xrow[t2];
                          else
                            for (int t2 = 0; t2 <= len; ++t2)
                              acc += grow[t2] * xrow[t2 * s];
                        }
                        gwp[kh * k + kw] += acc;
                      }
                  }
                }
            }
            if (xi >= 0) {
              auto& gx = t.grad_buf(xi);
              const S* wd = wsrc->data();
              for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co) {
                  const S* gp = g.data() + (std::size_t(n) * Co + co) * Ho * Wo;
                  for (int ci = 0; ci < Ci; ++ci) {
                    S* gxp = gx.data() + (std::size_t(n) * Ci + ci) * H * W;
                    const S* wp = wd + (std::size_t(co) * Ci + ci) * k * k;
                    for (int kh = 0; kh < k; ++kh)
                      for (int kw = 0; kw < k; ++kw) {
                        const S wv = wp[kh * k + kw];
                        int oh0, oh1, ow0, ow1;
                        detail::conv_valid_range(H, p, s, kh, Ho, oh0, oh1);
                        detail::conv_valid_range(W, p, s, kw, Wo, ow0, ow1);
                        for (int oh = oh0; oh <= oh1; ++oh) {
                          S* xrow = gxp + std::size_t(oh * s + kh - p) * W +
                                    (ow0 * s + kw - p);
                          const S* grow = gp + std::size_t(oh) * Wo + ow0;
                          const int len = ow1 - ow0;
                          if (s == 1)
                            for (int t2 = 0; t2 <= len; ++t2)
                              xrow[t2] += wv * grow[t2];
                          else
                            for (int t2 = 0; t2 <= len; ++t2)
                              xrow[t2 * s] += wv * grow[t2];
                        }
                      }
                  }
                }
            }
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel,
                  const TensorT<S>& bias, int stride, int padding) {
  return conv2d(x, kernel, &bias, stride, padding);
}

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel, int stride,
                  int padding) {
  return conv2d(x, kernel, static_cast<const TensorT<S>*>(nullptr), stride,
                padding);
}

namespace detail {

// Source interpolation taps for one output axis, half-pixel convention:
// src = (dst + 0.5) * in/out - 0.5, clamped to the edges.
template <class S>
struct AxisTap {
  int i0, i1;
  S f;
};

template <class S>
std::vector<AxisTap<S>> resize_taps(int in, int out) {
  std::vector<AxisTap<S>> taps(out);
  const double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double fl = std::floor(src);
    int i0 = int(fl);
    const S f = S(src - fl);
    int i1 = i0 + 1;
    i0 = std::clamp(i0, 0, in - 1);
    i1 = std::clamp(i1, 0, in - 1);
    taps[o] = {i0, i1, f};
  }
  return taps;
}

}  // namespace detail

template <class S>
TensorT<S> bilinear_resize(const TensorT<S>& x, int h_out, int w_out) {
  const Shape xs = x.shape();
  require(h_out >= 1 && w_out >= 1, "bilinear_resize: target ", h_out, "x",
          w_out, " must be positive");

  TensorT<S> y(Shape{xs.n, xs.c, h_out, w_out});
  auto& yv = y.mutable_vec();
  const bool identity = h_out == xs.h && w_out == xs.w;
  if (identity) {
    yv = x.vec();
  } else {
    const auto ty = detail::resize_taps<S>(xs.h, h_out);
    const auto tx = detail::resize_taps<S>(xs.w, w_out);
    const std::size_t planes = std::size_t(xs.n) * xs.c;
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const S* xp = x.data() + pl * xs.h * xs.w;
      S* yp = yv.data() + pl * std::size_t(h_out) * w_out;
      for (int oy = 0; oy < h_out; ++oy) {
        const auto& a = ty[oy];
        const S* r0 = xp + std::size_t(a.i0) * xs.w;
        const S* r1 = xp + std::size_t(a.i1) * xs.w;
        for (int ox = 0; ox < w_out; ++ox) {
          const auto& b = tx[ox];
          const S top = (S(1) - b.f) * r0[b.i0] + b.f * r0[b.i1];
          const S bot = (S(1) - b.f) * r1[b.i0] + b.f * r1[b.i1];
          yp[std::size_t(oy) * w_out + ox] = (S(1) - a.f) * top + a.f * bot;
        }
      }
    }
  }

  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    if (xi >= 0) {
      const int H = xs.h, W = xs.w;
      const std::size_t planes = std::size_t(xs.n) * xs.c;
      const int yi = tp->record(
          "bilinear_resize", {xi}, y.numel(),
          [=](TapeT<S>& t, const std::vector<S>& g) {
            auto& gx = t.grad_buf(xi);
            if (identity) {
              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
              return;
            }
            const auto ty = detail::resize_taps<S>(H, h_out);
            const auto tx = detail::resize_taps<S>(W, w_out);
            for (std::size_t pl = 0; pl < planes; ++pl) {
              S* gxp = gx.data() + pl * H * W;
              const S* gp = g.data() + pl * std::size_t(h_out) * w_out;
              for (int oy = 0; oy < h_out; ++oy) {
                const auto& a = ty[oy];
                for (int ox = 0; ox < w_out; ++ox) {
                  const auto& b = tx[ox];
                  const S gv = gp[std::size_t(oy) * w_out + ox];
                  gxp[std::size_t(a.i0) * W + b.i0] +=
                      (S(1) - a.f) * (S(1) - b.f) * gv;
                  gxp[std::size_t(a.i0) * W + b.i1] += (S(1) - a.f) * b.f * gv;
                  gxp[std::size_t(a.i1) * W + b.i0] += a.f * (S(1) - b.f) * gv;
                  gxp[std::size_t(a.i1) * W + b.i1] += a.f * b.f * gv;
                }
              }
            }
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

// Output bin (i,j) averages input rows [floor(i*H/bins), floor((i+1)*H/bins))
// and the corresponding column range.
template <class S>
TensorT<S> adaptive_avg_pool(const TensorT<S>& x, int bins) {
  const Shape xs = x.shape();
  require(bins >= 1, "adaptive_avg_pool: bins must be positive, got ", bins);
  require(bins <= xs.h && bins <= xs.w, "adaptive_avg_pool: ", bins,
          " bins exceed input extent ", xs.h, "x", xs.w);

  TensorT<S> y(Shape{xs.n, xs.c, bins, bins});
  auto& yv = y.mutable_vec();
  std::vector<int> edges_h(bins + 1), edges_w(bins + 1);
  for (int i = 0; i <= bins; ++i) {
    edges_h[i] = int(std::size_t(i) * xs.h / bins);
    edges_w[i] = int(std::size_t(i) * xs.w / bins);
  }
  const std::size_t planes = std::size_t(xs.n) * xs.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const S* xp = x.data() + pl * xs.h * xs.w;
    S* yp = yv.data() + pl * std::size_t(bins) * bins;
    for (int by = 0; by < bins; ++by)
      for (int bx = 0; bx < bins; ++bx) {
        S acc = S(0);
        for (int iy = edges_h[by]; iy < edges_h[by + 1]; ++iy)
          for (int ix = edges_w[bx]; ix < edges_w[bx + 1]; ++ix)
            acc += xp[std::size_t(iy) * xs.w + ix];
        const int area =
            (edges_h[by + 1] - edges_h[by]) * (edges_w[bx + 1] - edges_w[bx]);
        yp[std::size_t(by) * bins + bx] = acc / S(area);
      }
  }

  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    if (xi >= 0) {
      const int H = xs.h, W = xs.w;
      const int yi = tp->record(
          "adaptive_avg_pool", {xi}, y.numel(),
          [=](TapeT<S>& t, const std::vector<S>& g) {
            auto& gx = t.grad_buf(xi);
            std::vector<int> eh(bins + 1), ew(bins + 1);
            for (int i = 0; i <= bins; ++i) {
              eh[i] = int(std::size_t(i) * H / bins);
              ew[i] = int(std::size_t(i) * W / bins);
            }
            for (std::size_t pl = 0; pl < planes; ++pl) {
              S* gxp = gx.data() + pl * H * W;
              const S* gp = g.data() + pl * std::size_t(bins) * bins;
              for (int by = 0; by < bins; ++by)
                for (int bx = 0; bx < bins; ++bx) {
                  const int area =
                      (eh[by + 1] - eh[by]) * (ew[bx + 1] - ew[bx]);
                  const S gv = gp[std::size_t(by) * bins + bx] / S(area);
                  for (int iy = eh[by]; iy < eh[by + 1]; ++iy)
                    for (int ix = ew[bx]; ix < ew[bx + 1]; ++ix)
                      gxp[std::size_t(iy) * W + ix] += gv;
                }
            }
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

}  // namespace dntdf
