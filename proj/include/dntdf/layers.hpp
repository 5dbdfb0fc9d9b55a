#pragma once

// Building blocks for the decoder: He-initialised convolutions, the 1x1
// depth compression unit, the 3x3 fusion unit, pyramid pooling, and Adam.

#include <vector>

#include "dntdf/ops.hpp"
#include "dntdf/rng.hpp"
#include "dntdf/tensor.hpp"

namespace dntdf {

// Kernel values ~ N(0, sqrt(2 / fan_in)) with fan_in = C_in * k * k.
inline Tensor he_init(Shape kernel_shape, Rng& rng) {
  require_valid(kernel_shape, "he_init");
  const double fan_in =
      double(kernel_shape.c) * kernel_shape.h * kernel_shape.w;
  const double std = std::sqrt(2.0 / fan_in);
  std::vector<float> v(kernel_shape.numel());
  for (auto& x : v) x = float(std * rng.normal());
  return Tensor::from_values(kernel_shape, std::move(v));
}

// Optional leading ReLU, then a 1x1 convolution. Shortcut hops disable both
// the ReLU and the bias so the whole path stays homogeneous.
struct CompressionUnit {
  Tensor kernel;
  Tensor bias;
  bool pre_relu = true;
  bool has_bias = true;

  CompressionUnit() = default;
  CompressionUnit(int c_in, int c_out, Rng& rng, bool pre_relu_ = true,
                  bool has_bias_ = true)
      : pre_relu(pre_relu_), has_bias(has_bias_) {
    kernel = he_init(Shape{c_out, c_in, 1, 1}, rng);
    kernel.set_requires_grad(true);
    if (has_bias) {
      bias = Tensor(Shape{1, c_out, 1, 1}, 0.0f);
      bias.set_requires_grad(true);
    }
  }

  Tensor forward(const Tensor& x) const {
    const Tensor& in = x;
    if (has_bias)
      return conv2d(pre_relu ? relu(in) : in, kernel, bias, 1, 0);
    return conv2d(pre_relu ? relu(in) : in, kernel, 1, 0);
  }
};

// Leading ReLU then a 3x3 convolution with padding 1; inputs are
// channel-concatenated when more than one arrives.
struct FusionUnit {
  Tensor kernel;
  Tensor bias;

  FusionUnit() = default;
  FusionUnit(int c_in, int c_out, Rng& rng) {
    kernel = he_init(Shape{c_out, c_in, 3, 3}, rng);
    kernel.set_requires_grad(true);
    bias = Tensor(Shape{1, c_out, 1, 1}, 0.0f);
    bias.set_requires_grad(true);
  }

  Tensor forward(const std::vector<Tensor>& xs) const {
    require(!xs.empty(), "fusion unit: no inputs");
    Tensor in = xs.size() == 1 ? xs[0] : concat(xs);
    return conv2d(relu(in), kernel, bias, 1, 1);
  }
};

// Pyramid pooling: per bin, adaptive average pool -> 1x1 conv -> bilinear
// resize back; branch outputs are concatenated with the input and fused by
// a compression unit to depth d_g. Branch convolutions carry no ReLU unless
// branch_relu is set.
struct PyramidPooling {
  std::vector<int> bins;
  std::vector<CompressionUnit> branches;
  CompressionUnit fuse;

  PyramidPooling() = default;
  PyramidPooling(int c_in, int d_g, std::vector<int> bins_, int branch_depth,
                 Rng& rng, bool branch_relu = false)
      : bins(std::move(bins_)) {
    require(!bins.empty(), "pyramid pooling: empty bin list");
    for (std::size_t i = 1; i < bins.size(); ++i)
      require(bins[i] > bins[i - 1],
              "pyramid pooling: bins must be strictly increasing");
    require(bins.front() >= 1, "pyramid pooling: bins must be positive");
    for (std::size_t i = 0; i < bins.size(); ++i)
      branches.emplace_back(c_in, branch_depth, rng, branch_relu, true);
    fuse = CompressionUnit(c_in + int(bins.size()) * branch_depth, d_g, rng,
                           true, true);
  }

  Tensor forward(const Tensor& x) const {
    const Shape s = x.shape();
    require(bins.back() <= s.h && bins.back() <= s.w,
            "pyramid pooling: bin ", bins.back(),
            " larger than input spatial size ", s.h, "x", s.w);
    std::vector<Tensor> parts{x};
    for (std::size_t i = 0; i < bins.size(); ++i) {
      Tensor pooled = adaptive_avg_pool(x, bins[i]);
      Tensor mixed = branches[i].forward(pooled);
      parts.push_back(bilinear_resize(mixed, s.h, s.w));
    }
    return fuse.forward(concat(parts));
  }
};

// Adam with bias-corrected moments; state is keyed by parameter order and
// sized on the first step.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<std::vector<double>> m, v;

  explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

  void step(std::vector<Tensor>& params, double lr_now) {
    if (m.empty()) {
      m.resize(params.size());
      v.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i].numel(), 0.0);
        v[i].assign(params[i].numel(), 0.0);
      }
    }
    require(m.size() == params.size(), "adam: parameter list changed size");
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, double(step_count));
    const double c2 = 1.0 - std::pow(beta2, double(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      require(p.has_grad(), "adam: parameter ", i, " has no gradient buffer");
      const auto& g = p.grad();
      auto& data = p.mutable_vec();
      for (std::size_t j = 0; j < data.size(); ++j) {
        const double gj = g[j];
        m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * gj;
        v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * gj * gj;
        const double mhat = m[i][j] / c1;
        const double vhat = v[i][j] / c2;
        data[j] = float(data[j] - lr_now * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  void step(std::vector<Tensor>& params) { step(params, lr); }
};

}  // namespace dntdf
