#pragma once

// 4-D tensors (NCHW, row-major) with reverse-mode autograd on an append-only
// tape. Runtime code instantiates S = float; gradient checking instantiates
// S = double. Ops never mutate their inputs; each op returns a fresh tensor
// and, when a tape is active and an input is tracked, records one node whose
// backward pass accumulates into the input gradients. One backward per tape.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dntdf {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
template <class... Args>
std::string format_msg(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(detail::format_msg(args...));
}

template <class... Args>
void require(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  std::size_t numel() const {
    return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const {
    return detail::format_msg("(", n, ",", c, ",", h, ",", w, ")");
  }
};

inline void require_valid(const Shape& s, const char* who) {
  require(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1, who,
          ": every dimension must be >= 1, got ", s.str());
}

// Append-only autograd graph. Node inputs always precede the node, so append
// order is a topological order and backward is a single reverse sweep.
template <class S>
class TapeT {
 public:
  using BackFn = std::function<void(TapeT&, const std::vector<S>&)>;

  TapeT() : id_(++counter()) {}
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT*& current() {
    thread_local TapeT* cur = nullptr;
    return cur;
  }

  // Activates this tape on the current thread for the scope's lifetime.
  class Scope {
   public:
    explicit Scope(TapeT& t) : prev_(current()) { current() = &t; }
    ~Scope() { current() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    TapeT* prev_;
  };

  std::uint64_t id() const { return id_; }
  int size() const { return int(nodes_.size()); }
  bool consumed() const { return consumed_; }
  const char* tag_of(int i) const { return nodes_.at(i).tag; }
  const std::vector<int>& inputs_of(int i) const { return nodes_.at(i).inputs; }

  int add_leaf(std::size_t numel, std::shared_ptr<std::vector<S>> grad) {
    nodes_.push_back(Node{"leaf", {}, numel, true, std::move(grad), nullptr});
    return int(nodes_.size()) - 1;
  }

  int record(const char* tag, std::vector<int> inputs, std::size_t numel,
             BackFn back) {
    const int next = int(nodes_.size());
    for (int i : inputs)
      require(i >= 0 && i < next, "autograd: node input ", i,
              " does not precede node ", next);
    nodes_.push_back(
        Node{tag, std::move(inputs), numel, false, nullptr, std::move(back)});
    return next;
  }

  // Gradient buffer of node i, zero-initialised on first touch. For leaves
  // this aliases the owning tensor's gradient storage.
  std::vector<S>& grad_buf(int i) {
    Node& n = nodes_.at(i);
    if (!n.grad) n.grad = std::make_shared<std::vector<S>>(n.numel, S(0));
    return *n.grad;
  }

  bool reached(int i) const { return nodes_.at(i).grad != nullptr; }

  void backward(int node) {
    require(!consumed_, "autograd: tape already consumed by backward");
    require(node >= 0 && node < int(nodes_.size()),
            "autograd: backward from unknown node ", node);
    require(nodes_[node].numel == 1,
            "autograd: backward requires a scalar node, got ",
            nodes_[node].numel, " elements");
    consumed_ = true;
    grad_buf(node)[0] = S(1);
    for (int i = node; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.grad || n.leaf) continue;
      n.back(*this, *n.grad);
      n.grad.reset();
    }
  }

 private:
  struct Node {
    const char* tag;
    std::vector<int> inputs;
    std::size_t numel;
    bool leaf;
    std::shared_ptr<std::vector<S>> grad;
    BackFn back;
  };

  static std::atomic<std::uint64_t>& counter() {
    static std::atomic<std::uint64_t> c{0};
    return c;
  }

  std::vector<Node> nodes_;
  std::uint64_t id_;
  bool consumed_ = false;
};

template <class S>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape s, S fill = S(0)) : shape_(s) {
    require_valid(s, "tensor");
    data_ = std::make_shared<std::vector<S>>(s.numel(), fill);
  }

  static TensorT from_values(Shape s, std::vector<S> v) {
    require_valid(s, "tensor");
    require(v.size() == s.numel(), "tensor: ", v.size(),
            " values for shape ", s.str());
    TensorT t;
    t.shape_ = s;
    t.data_ = std::make_shared<std::vector<S>>(std::move(v));
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return shape_.numel(); }
  const std::vector<S>& vec() const { return *data_; }
  const S* data() const { return data_->data(); }
  std::shared_ptr<const std::vector<S>> storage() const { return data_; }

  // Mutable access is for construction and optimizer updates between tapes;
  // ops treat existing tensors as immutable.
  std::vector<S>& mutable_vec() { return *data_; }

  S at(int n, int c, int h, int w) const {
    require(n >= 0 && n < shape_.n && c >= 0 && c < shape_.c && h >= 0 &&
                h < shape_.h && w >= 0 && w < shape_.w,
            "tensor: index (", n, ",", c, ",", h, ",", w, ") out of range ",
            shape_.str());
    return (*data_)[((std::size_t(n) * shape_.c + c) * shape_.h + h) *
                        shape_.w +
                    w];
  }

  // Allocates the gradient buffer eagerly so every copy of this tensor
  // aliases the same storage no matter when the copy is taken.
  void set_requires_grad(bool b) {
    requires_grad_ = b;
    if (b && !grad_ && data_)
      grad_ = std::make_shared<std::vector<S>>(numel(), S(0));
  }
  bool requires_grad() const { return requires_grad_; }

  bool has_grad() const { return grad_ != nullptr; }
  const std::vector<S>& grad() const {
    require(grad_ != nullptr, "tensor: gradient buffer not allocated");
    return *grad_;
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), S(0));
  }

  // Node id of this tensor on tape tp; registers a leaf on first use when the
  // tensor requires grad, otherwise reports -1 (constant).
  int node_on(TapeT<S>& tp) const {
    if (tape_id_ == tp.id() && node_ >= 0) return node_;
    if (!requires_grad_) return -1;
    if (!grad_) grad_ = std::make_shared<std::vector<S>>(numel(), S(0));
    node_ = tp.add_leaf(numel(), grad_);
    tape_id_ = tp.id();
    return node_;
  }

  void bind_node(const TapeT<S>& tp, int node) const {
    tape_id_ = tp.id();
    node_ = node;
  }

  int node_id() const { return node_; }

 private:
  Shape shape_{};
  std::shared_ptr<std::vector<S>> data_;
  mutable std::shared_ptr<std::vector<S>> grad_;
  mutable std::uint64_t tape_id_ = 0;
  mutable int node_ = -1;
  bool requires_grad_ = false;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

// ---- pointwise and structural ops ----

template <class S>
TensorT<S> relu(const TensorT<S>& x) {
  TensorT<S> y(x.shape());
  const auto& xv = x.vec();
  auto& yv = y.mutable_vec();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > S(0) ? xv[i] : S(0);
  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    if (xi >= 0) {
      auto xs = x.storage();
      const int yi = tp->record(
          "relu", {xi}, y.numel(),
          [xi, xs](TapeT<S>& t, const std::vector<S>& g) {
            auto& gx = t.grad_buf(xi);
            const auto& xv = *xs;
            // subgradient at 0 is 0
            for (std::size_t i = 0; i < g.size(); ++i)
              if (xv[i] > S(0)) gx[i] += g[i];
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  TensorT<S> y(x.shape());
  const auto& xv = x.vec();
  auto& yv = y.mutable_vec();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const S v = xv[i];
    if (v >= S(0)) {
      const S e = std::exp(-v);
      yv[i] = S(1) / (S(1) + e);
    } else {
      const S e = std::exp(v);
      yv[i] = e / (S(1) + e);
    }
  }
  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    if (xi >= 0) {
      auto ys = y.storage();
      const int yi = tp->record(
          "sigmoid", {xi}, y.numel(),
          [xi, ys](TapeT<S>& t, const std::vector<S>& g) {
            auto& gx = t.grad_buf(xi);
            const auto& yv = *ys;
            for (std::size_t i = 0; i < g.size(); ++i)
              gx[i] += g[i] * yv[i] * (S(1) - yv[i]);
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  require(a.shape() == b.shape(), "add: shape ", a.shape().str(), " vs ",
          b.shape().str());
  TensorT<S> y(a.shape());
  const auto& av = a.vec();
  const auto& bv = b.vec();
  auto& yv = y.mutable_vec();
  for (std::size_t i = 0; i < av.size(); ++i) yv[i] = av[i] + bv[i];
  if (auto* tp = TapeT<S>::current()) {
    const int ai = a.node_on(*tp), bi = b.node_on(*tp);
    if (ai >= 0 || bi >= 0) {
      const int yi = tp->record(
          "add", ai >= 0 && bi >= 0 ? std::vector<int>{ai, bi}
                                    : std::vector<int>{ai >= 0 ? ai : bi},
          y.numel(), [ai, bi](TapeT<S>& t, const std::vector<S>& g) {
            if (ai >= 0) {
              auto& ga = t.grad_buf(ai);
              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bi >= 0) {
              auto& gb = t.grad_buf(bi);
              for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  require(a.shape() == b.shape(), "mul: shape ", a.shape().str(), " vs ",
          b.shape().str());
  TensorT<S> y(a.shape());
  const auto& av = a.vec();
  const auto& bv = b.vec();
  auto& yv = y.mutable_vec();
  for (std::size_t i = 0; i < av.size(); ++i) yv[i] = av[i] * bv[i];
  if (auto* tp = TapeT<S>::current()) {
    const int ai = a.node_on(*tp), bi = b.node_on(*tp);
    if (ai >= 0 || bi >= 0) {
      auto as = a.storage();
      auto bs = b.storage();
      std::vector<int> deps;
      for (int id : {ai, bi})
        if (id >= 0) deps.push_back(id);
      const int yi = tp->record(
          "mul", std::move(deps), y.numel(),
          [ai, bi, as, bs](TapeT<S>& t, const std::vector<S>& g) {
            if (ai >= 0) {
              auto& ga = t.grad_buf(ai);
              const auto& bv = *bs;
              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (bi >= 0) {
              auto& gb = t.grad_buf(bi);
              const auto& av = *as;
              for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

template <class S>
TensorT<S> scalar_mul(const TensorT<S>& x, S a) {
  TensorT<S> y(x.shape());
  const auto& xv = x.vec();
  auto& yv = y.mutable_vec();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = a * xv[i];
  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    if (xi >= 0) {
      const int yi = tp->record(
          "scalar_mul", {xi}, y.numel(),
          [xi, a](TapeT<S>& t, const std::vector<S>& g) {
            auto& gx = t.grad_buf(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += a * g[i];
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

// Concatenation along the channel axis; inputs share n, h, w.
template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& xs) {
  require(!xs.empty(), "concat: needs at least one input");
  const Shape& s0 = xs[0].shape();
  int c_total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    require(s.n == s0.n && s.h == s0.h && s.w == s0.w,
            "concat: mismatched n/h/w, ", s.str(), " vs ", s0.str());
    c_total += s.c;
  }
  TensorT<S> y(Shape{s0.n, c_total, s0.h, s0.w});
  auto& yv = y.mutable_vec();
  const std::size_t plane = std::size_t(s0.h) * s0.w;
  for (int n = 0; n < s0.n; ++n) {
    std::size_t off = std::size_t(n) * c_total * plane;
    for (const auto& x : xs) {
      const auto& xv = x.vec();
      const std::size_t len = std::size_t(x.shape().c) * plane;
      const std::size_t src = std::size_t(n) * len;
      std::copy(xv.begin() + src, xv.begin() + src + len, yv.begin() + off);
      off += len;
    }
  }
  if (auto* tp = TapeT<S>::current()) {
    std::vector<int> ids(xs.size());
    std::vector<int> chans(xs.size());
    bool tracked = false;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      ids[k] = xs[k].node_on(*tp);
      chans[k] = xs[k].shape().c;
      tracked = tracked || ids[k] >= 0;
    }
    if (tracked) {
      std::vector<int> deps;
      for (int id : ids)
        if (id >= 0) deps.push_back(id);
      const int N = s0.n;
      const int yi = tp->record(
          "concat", std::move(deps), y.numel(),
          [ids, chans, N, plane, c_total](TapeT<S>& t,
                                          const std::vector<S>& g) {
            for (int n = 0; n < N; ++n) {
              std::size_t off = std::size_t(n) * c_total * plane;
              for (std::size_t k = 0; k < ids.size(); ++k) {
                const std::size_t len = std::size_t(chans[k]) * plane;
                if (ids[k] >= 0) {
                  auto& gx = t.grad_buf(ids[k]);
                  const std::size_t dst = std::size_t(n) * len;
                  for (std::size_t i = 0; i < len; ++i)
                    gx[dst + i] += g[off + i];
                }
                off += len;
              }
            }
          });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

// Reduces to a (1,1,1,1) scalar tensor.
template <class S>
TensorT<S> sum(const TensorT<S>& x) {
  S acc = S(0);
  for (S v : x.vec()) acc += v;
  TensorT<S> y(Shape{1, 1, 1, 1}, acc);
  if (auto* tp = TapeT<S>::current()) {
    const int xi = x.node_on(*tp);
    if (xi >= 0) {
      const std::size_t n = x.numel();
      const int yi =
          tp->record("sum", {xi}, 1,
                     [xi, n](TapeT<S>& t, const std::vector<S>& g) {
                       auto& gx = t.grad_buf(xi);
                       for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
                     });
      y.bind_node(*tp, yi);
    }
  }
  return y;
}

template <class S>
void backward(TapeT<S>& tp, const TensorT<S>& loss) {
  require(loss.numel() == 1, "backward: loss must be scalar, got ",
          loss.shape().str());
  const int node = loss.node_id();
  require(node >= 0, "backward: loss is not attached to the tape");
  tp.backward(node);
}

}  // namespace dntdf
