#pragma once

// The full encoder–decoder as a flat computation graph. One node list drives
// three consumers: the forward interpreter (training/inference), the text
// serializer (golden tests), and the cost accountant (parameters/MACs).
// Every node carries a static output-shape annotation; forward() validates
// runtime shapes against the annotations at every edge.
//
// Decoder layout, for encoder features E_1..E_5 (depth d_i at 1/2^i scale)
// and compression ratio r (round-half-up division, floor 1):
//   side:    F_i = conv1x1(relu(E_i)) to depth d_i/r.
//   ppm:     G = fuse(concat[F_5, branches]) at depth d_g (default d_5/r);
//            each branch pools F_5 to b×b, 1x1-convs to d_g/4, resizes back.
//   global:  G_j = resize_{2^(j-1)}(conv1x1(relu(G))) to depth d_{6-j}/r.
//   pcsp:    source i in {2..5} reaches stages j in [7-i, 5]; the first
//            element is a pure bilinear ×2 of F_i, every later hop is a
//            bias-free, relu-free 1x1 conv then bilinear ×2, each hop into
//            stage j scaling depth by d_{6-j}/d_{7-j}; consequently
//            depth(F_{i->j}) = round((d_i/r) · d_{6-j} / d_{i-1}).
//   context: C_j = conv1x1(relu(concat[hatF_{6-j}, shortcuts into j])) to
//            depth d_{6-j}/r, where hatF = conv1x1(relu(F)) at equal depth.
//   stages:  D_1 = up2(conv3x3(relu(F_5))) to d_4/r;
//            D_j = up2(conv3x3(relu(concat[D_{j-1}, F_{6-j}, C_j, G_j])))
//            to depth d_{5-j}/r (d_0 := d_1).
//   head:    sigmoid(resize_to_input(conv1x1(relu(D_5)))) — the resize is
//            omitted when D_5 already sits at the input resolution.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dntdf/layers.hpp"
#include "dntdf/ops.hpp"
#include "dntdf/profiles.hpp"
#include "dntdf/tensor.hpp"

namespace dntdf {

// Round-half-up division with a floor of one channel.
inline int round_div_min1(long long num, long long den) {
  require(num >= 0 && den > 0, "round_div_min1: bad operands ", num, "/", den);
  const long long q = (2 * num + den) / (2 * den);
  return int(q < 1 ? 1 : q);
}

struct DecoderConfig {
  int r = 4;
  int pcsp_count = 4;  // how many of the deepest encoder features get paths
  bool ppm_enabled = true;
  std::vector<int> bins = {1, 2, 3, 6};
  bool ppm_branch_relu = false;  // ablation: relu before each branch conv
  int d_g = 0;                   // 0 -> d_5 / r
};

// ---------------------------------------------------------------------------
// Shortcut plan: per source stage, the resolved chain of hops.

struct ShortcutHop {
  int target_stage = 0;  // decoder stage j this hop lands in
  int in_depth = 0;      // depth entering the hop
  int out_depth = 0;     // depth after the hop (== in_depth when conv-free)
  int out_h = 0, out_w = 0;
  bool has_conv = false;  // first element is a pure ×2 interpolation
};

struct ShortcutPath {
  int source_stage = 0;  // encoder stage i
  std::vector<ShortcutHop> hops;
};

struct ShortcutPlan {
  std::vector<ShortcutPath> paths;  // deepest source first

  const ShortcutHop* hop_into(int source_stage, int target_stage) const {
    for (const auto& p : paths)
      if (p.source_stage == source_stage)
        for (const auto& h : p.hops)
          if (h.target_stage == target_stage) return &h;
    return nullptr;
  }
};

inline ShortcutPlan make_shortcut_plan(const BackboneProfile& profile,
                                       const DecoderConfig& cfg, int input_h,
                                       int input_w) {
  require(cfg.pcsp_count >= 0 && cfg.pcsp_count <= 4,
          "shortcut plan: pcsp_count ", cfg.pcsp_count, " outside 0..4");
  ShortcutPlan plan;
  for (int k = 0; k < cfg.pcsp_count; ++k) {
    const int i = 5 - k;  // sources 5,4,3,2 — deepest first
    ShortcutPath path;
    path.source_stage = i;
    const int side_depth = round_div_min1(profile.depth(i), cfg.r);
    const int first_stage = 7 - i;  // 5 - i + 2
    int prev_depth = side_depth;
    for (int j = first_stage; j <= 5; ++j) {
      ShortcutHop hop;
      hop.target_stage = j;
      hop.in_depth = prev_depth;
      // Telescoped depth: (d_i/r) · d_{6-j} / d_{i-1}, rounded once per stage
      // so per-hop conv depths stay consistent with the closed form.
      hop.out_depth =
          j == first_stage
              ? side_depth
              : round_div_min1(
                    (long long)side_depth * profile.depth(6 - j),
                    profile.depth(i - 1));
      hop.has_conv = j != first_stage;
      hop.out_h = input_h >> (6 - j);  // stage j works at 1/2^(6-j) scale
      hop.out_w = input_w >> (6 - j);
      path.hops.push_back(hop);
      prev_depth = hop.out_depth;
    }
    plan.paths.push_back(std::move(path));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Graph node structure.

enum class OpKind {
  Input,
  Conv,
  Relu,
  Sigmoid,
  Resize,
  AdaptiveAvgPool,
  MaxPool,
  BatchNorm,
  Add,
  Concat,
  Opaque  // encoder stage whose internals are not modeled
};

enum class Component { Encoder, SideCompression, Pcsp, Ppm, Decoder, Head };

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Conv: return "conv";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Resize: return "resize";
    case OpKind::AdaptiveAvgPool: return "adaptive-avg-pool";
    case OpKind::MaxPool: return "max-pool";
    case OpKind::BatchNorm: return "batch-norm";
    case OpKind::Add: return "add";
    case OpKind::Concat: return "concat";
    case OpKind::Opaque: return "opaque";
  }
  return "?";
}

inline const char* component_name(Component c) {
  switch (c) {
    case Component::Encoder: return "encoder";
    case Component::SideCompression: return "side-compression";
    case Component::Pcsp: return "pcsp";
    case Component::Ppm: return "ppm";
    case Component::Decoder: return "decoder";
    case Component::Head: return "head";
  }
  return "?";
}

struct GraphNode {
  int id = -1;
  std::string name;
  OpKind kind = OpKind::Input;
  Component component = Component::Encoder;
  std::vector<int> inputs;
  Shape out{};
  // Conv / MaxPool geometry.
  int kernel = 0, stride = 1, padding = 0;
  bool has_bias = false;
  // Indices into the parameter registry (-1 when absent).
  int weight_param = -1, bias_param = -1;
};

struct ParamInfo {
  std::string name;
  Shape shape{};
};

// ---------------------------------------------------------------------------
// ModelGraph: node list + parameter registry (+ data when allocated).

class ModelGraph {
 public:
  std::string backbone_name;
  std::array<int, 5> backbone_depths{};
  DecoderConfig cfg;
  std::uint32_t seed = 1;

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<ParamInfo>& param_infos() const { return infos_; }
  bool allocated() const { return allocated_; }
  int output_node() const { return output_node_; }
  Shape input_shape() const { return input_shape_; }

  std::vector<Tensor>& params() {
    require(allocated_, "model graph: parameters were not allocated");
    return data_;
  }
  const std::vector<Tensor>& params() const {
    require(allocated_, "model graph: parameters were not allocated");
    return data_;
  }

  long long param_scalars() const {
    long long total = 0;
    for (const auto& p : infos_) total += p.shape.numel();
    return total;
  }

  // --- construction (build_model drives these) ---

  void start(Shape input_shape, bool allocate, std::uint32_t seed_) {
    input_shape_ = input_shape;
    allocated_ = allocate;
    seed = seed_;
    rng_ = Rng(seed_);
    nodes_.clear();
    infos_.clear();
    data_.clear();
    output_node_ = -1;
  }

  int add_input(const std::string& name) {
    GraphNode n;
    n.kind = OpKind::Input;
    n.component = Component::Encoder;
    n.name = name;
    n.out = input_shape_;
    return push(std::move(n));
  }

  int add_conv(const std::string& name, Component comp, int in, int c_out,
               int k, int stride, int padding, bool bias) {
    const Shape is = shape_of(in);
    GraphNode n;
    n.kind = OpKind::Conv;
    n.component = comp;
    n.name = name;
    n.inputs = {in};
    n.kernel = k;
    n.stride = stride;
    n.padding = padding;
    n.has_bias = bias;
    n.out = Shape{is.n, c_out, conv_out_extent(is.h, padding, k, stride),
                  conv_out_extent(is.w, padding, k, stride)};
    n.weight_param = add_param(name + ".w", Shape{c_out, is.c, k, k}, true);
    if (bias)
      n.bias_param = add_param(name + ".b", Shape{1, c_out, 1, 1}, false);
    return push(std::move(n));
  }

  int add_pointwise(const std::string& name, Component comp, OpKind kind,
                    int in) {
    require(kind == OpKind::Relu || kind == OpKind::Sigmoid,
            "add_pointwise: kind must be relu or sigmoid");
    GraphNode n;
    n.kind = kind;
    n.component = comp;
    n.name = name;
    n.inputs = {in};
    n.out = shape_of(in);
    return push(std::move(n));
  }

  int add_resize(const std::string& name, Component comp, int in, int out_h,
                 int out_w) {
    const Shape is = shape_of(in);
    GraphNode n;
    n.kind = OpKind::Resize;
    n.component = comp;
    n.name = name;
    n.inputs = {in};
    n.out = Shape{is.n, is.c, out_h, out_w};
    return push(std::move(n));
  }

  int add_adaptive_pool(const std::string& name, Component comp, int in,
                        int bins) {
    const Shape is = shape_of(in);
    require(bins >= 1 && bins <= is.h && bins <= is.w, "graph: pool bins ",
            bins, " exceed input ", is.h, "x", is.w, " at node ", name);
    GraphNode n;
    n.kind = OpKind::AdaptiveAvgPool;
    n.component = comp;
    n.name = name;
    n.inputs = {in};
    n.out = Shape{is.n, is.c, bins, bins};
    return push(std::move(n));
  }

  int add_max_pool(const std::string& name, Component comp, int in, int k,
                   int stride, int padding) {
    const Shape is = shape_of(in);
    GraphNode n;
    n.kind = OpKind::MaxPool;
    n.component = comp;
    n.name = name;
    n.inputs = {in};
    n.kernel = k;
    n.stride = stride;
    n.padding = padding;
    n.out = Shape{is.n, is.c, conv_out_extent(is.h, padding, k, stride),
                  conv_out_extent(is.w, padding, k, stride)};
    return push(std::move(n));
  }

  int add_batch_norm(const std::string& name, Component comp, int in) {
    const Shape is = shape_of(in);
    GraphNode n;
    n.kind = OpKind::BatchNorm;
    n.component = comp;
    n.name = name;
    n.inputs = {in};
    n.out = is;
    n.weight_param = add_param(name + ".gamma", Shape{1, is.c, 1, 1}, false);
    n.bias_param = add_param(name + ".beta", Shape{1, is.c, 1, 1}, false);
    return push(std::move(n));
  }

  int add_add(const std::string& name, Component comp, int a, int b) {
    require(shape_of(a) == shape_of(b), "graph: add operands disagree: ",
            shape_of(a).str(), " vs ", shape_of(b).str(), " at node ", name);
    GraphNode n;
    n.kind = OpKind::Add;
    n.component = comp;
    n.name = name;
    n.inputs = {a, b};
    n.out = shape_of(a);
    return push(std::move(n));
  }

  int add_concat(const std::string& name, Component comp,
                 const std::vector<int>& ins) {
    require(!ins.empty(), "graph: concat with no inputs at node ", name);
    Shape first = shape_of(ins[0]);
    int channels = 0;
    for (int id : ins) {
      const Shape s = shape_of(id);
      require(s.n == first.n && s.h == first.h && s.w == first.w,
              "graph: concat spatial mismatch ", first.str(), " vs ", s.str(),
              " at node ", name);
      channels += s.c;
    }
    GraphNode n;
    n.kind = OpKind::Concat;
    n.component = comp;
    n.name = name;
    n.inputs = ins;
    n.out = Shape{first.n, channels, first.h, first.w};
    return push(std::move(n));
  }

  int add_opaque(const std::string& name, Component comp, int in, Shape out) {
    GraphNode n;
    n.kind = OpKind::Opaque;
    n.component = comp;
    n.name = name;
    if (in >= 0) n.inputs = {in};
    n.out = out;
    return push(std::move(n));
  }

  void set_output(int id) {
    require(id >= 0 && id < int(nodes_.size()), "graph: bad output node");
    output_node_ = id;
  }

  // --- lookup ---

  int node_by_name(const std::string& name) const {
    for (const auto& n : nodes_)
      if (n.name == name) return n.id;
    fail("model graph: no node named '", name, "'");
  }

  int param_by_name(const std::string& name) const {
    for (std::size_t i = 0; i < infos_.size(); ++i)
      if (infos_[i].name == name) return int(i);
    fail("model graph: no parameter named '", name, "'");
  }

  // --- execution ---

  Tensor forward(const Tensor& image) const {
    return forward_all(image)[std::size_t(output_node_)];
  }

  // Runs the graph and returns every node's value (indexed by node id);
  // tests and diagnostics read intermediate features from this.
  std::vector<Tensor> forward_all(const Tensor& image) const {
    require(allocated_, "forward: parameters were not allocated");
    require(output_node_ >= 0, "forward: graph has no output node");
    require(image.shape() == input_shape_, "forward: input shape ",
            image.shape().str(), " does not match build-time shape ",
            input_shape_.str());
    std::vector<Tensor> values(nodes_.size());
    for (const auto& n : nodes_) {
      Tensor out;
      switch (n.kind) {
        case OpKind::Input:
          out = image;
          break;
        case OpKind::Conv: {
          const Tensor& x = values[std::size_t(n.inputs[0])];
          if (n.has_bias)
            out = conv2d(x, data_[std::size_t(n.weight_param)],
                         data_[std::size_t(n.bias_param)], n.stride,
                         n.padding);
          else
            out = conv2d(x, data_[std::size_t(n.weight_param)], n.stride,
                         n.padding);
          break;
        }
        case OpKind::Relu:
          out = relu(values[std::size_t(n.inputs[0])]);
          break;
        case OpKind::Sigmoid:
          out = sigmoid(values[std::size_t(n.inputs[0])]);
          break;
        case OpKind::Resize:
          out = bilinear_resize(values[std::size_t(n.inputs[0])], n.out.h,
                                n.out.w);
          break;
        case OpKind::AdaptiveAvgPool:
          out = adaptive_avg_pool(values[std::size_t(n.inputs[0])], n.out.h);
          break;
        case OpKind::Concat: {
          std::vector<Tensor> xs;
          xs.reserve(n.inputs.size());
          for (int id : n.inputs) xs.push_back(values[std::size_t(id)]);
          out = concat(xs);
          break;
        }
        default:
          fail("forward: node '", n.name, "' (", op_kind_name(n.kind),
               ") is structural-only and cannot be executed");
      }
      require(out.shape() == n.out, "forward: node '", n.name,
              "' produced ", out.shape().str(), " but was annotated ",
              n.out.str());
      values[std::size_t(n.id)] = std::move(out);
    }
    return values;
  }

  // --- serialization of the structure ---

  std::string describe() const {
    std::ostringstream os;
    os << "graph dntdf/" << backbone_name << " input " << input_shape_.str()
       << " r " << cfg.r << " pcsp " << cfg.pcsp_count << " ppm "
       << (cfg.ppm_enabled ? 1 : 0) << "\n";
    for (const auto& n : nodes_) {
      os << "node " << n.id << " " << n.name << " " << op_kind_name(n.kind);
      if (n.kind == OpKind::Conv || n.kind == OpKind::MaxPool)
        os << " k" << n.kernel << " s" << n.stride << " p" << n.padding;
      os << " in";
      if (n.inputs.empty())
        os << " -";
      else
        for (int id : n.inputs) os << " " << id;
      os << " out " << n.out.str() << " " << component_name(n.component);
      long long p = 0;
      if (n.weight_param >= 0)
        p += infos_[std::size_t(n.weight_param)].shape.numel();
      if (n.bias_param >= 0)
        p += infos_[std::size_t(n.bias_param)].shape.numel();
      if (p > 0) os << " params " << p;
      os << "\n";
    }
    os << "output " << output_node_ << "\n";
    os << "total-params " << param_scalars() << "\n";
    return os.str();
  }

 private:
  int push(GraphNode n) {
    for (int id : n.inputs)
      require(id >= 0 && id < int(nodes_.size()),
              "graph: node '", n.name, "' references a later node");
    n.id = int(nodes_.size());
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  Shape shape_of(int id) const {
    require(id >= 0 && id < int(nodes_.size()), "graph: bad node id ", id);
    return nodes_[std::size_t(id)].out;
  }

  int add_param(const std::string& name, Shape shape, bool he) {
    infos_.push_back(ParamInfo{name, shape});
    if (allocated_) {
      Tensor t = he ? he_init(shape, rng_) : Tensor(shape, 0.0f);
      t.set_requires_grad(true);
      data_.push_back(std::move(t));
    }
    return int(infos_.size()) - 1;
  }

  std::vector<GraphNode> nodes_;
  std::vector<ParamInfo> infos_;
  std::vector<Tensor> data_;
  bool allocated_ = false;
  int output_node_ = -1;
  Shape input_shape_{};
  Rng rng_{1};
};

// ---------------------------------------------------------------------------
// Encoder emission.

namespace detail {

inline std::array<int, 5> encode_tiny(ModelGraph& g,
                                      const BackboneProfile& p, int input) {
  std::array<int, 5> stages{};
  int cur = input;
  for (int i = 1; i <= 5; ++i) {
    const std::string base = "enc" + std::to_string(i);
    int conv = g.add_conv(base + ".conv", Component::Encoder, cur,
                          p.depth(i), 3, 2, 1, true);
    cur = g.add_pointwise(base + ".relu", Component::Encoder, OpKind::Relu,
                          conv);
    stages[std::size_t(i - 1)] = cur;
  }
  return stages;
}

// Bottleneck residual block: 1x1 down, 3x3 (carries the stride), 1x1 up,
// with a 1x1 projection on the skip when shape changes. Convolutions are
// bias-free and followed by batch-norm, as in the reference network.
inline int resnet_bottleneck(ModelGraph& g, const std::string& base, int in,
                             int mid, int out_ch, int stride) {
  const Component enc = Component::Encoder;
  int c1 = g.add_conv(base + ".conv1", enc, in, mid, 1, 1, 0, false);
  int b1 = g.add_batch_norm(base + ".bn1", enc, c1);
  int r1 = g.add_pointwise(base + ".relu1", enc, OpKind::Relu, b1);
  int c2 = g.add_conv(base + ".conv2", enc, r1, mid, 3, stride, 1, false);
  int b2 = g.add_batch_norm(base + ".bn2", enc, c2);
  int r2 = g.add_pointwise(base + ".relu2", enc, OpKind::Relu, b2);
  int c3 = g.add_conv(base + ".conv3", enc, r2, out_ch, 1, 1, 0, false);
  int b3 = g.add_batch_norm(base + ".bn3", enc, c3);
  int skip = in;
  const Shape in_shape = g.nodes()[std::size_t(in)].out;
  if (in_shape.c != out_ch || stride != 1) {
    int dc = g.add_conv(base + ".downsample.conv", enc, in, out_ch, 1, stride,
                        0, false);
    skip = g.add_batch_norm(base + ".downsample.bn", enc, dc);
  }
  int sum = g.add_add(base + ".add", enc, b3, skip);
  return g.add_pointwise(base + ".relu3", enc, OpKind::Relu, sum);
}

inline std::array<int, 5> encode_resnet50(ModelGraph& g, int input) {
  const Component enc = Component::Encoder;
  std::array<int, 5> stages{};
  int c1 = g.add_conv("conv1", enc, input, 64, 7, 2, 3, false);
  int b1 = g.add_batch_norm("bn1", enc, c1);
  int r1 = g.add_pointwise("relu1", enc, OpKind::Relu, b1);
  stages[0] = r1;
  int cur = g.add_max_pool("maxpool", enc, r1, 3, 2, 1);
  const int block_counts[4] = {3, 4, 6, 3};
  const int mids[4] = {64, 128, 256, 512};
  for (int layer = 1; layer <= 4; ++layer) {
    const int mid = mids[layer - 1];
    const int out_ch = mid * 4;
    for (int block = 0; block < block_counts[layer - 1]; ++block) {
      const int stride = (layer > 1 && block == 0) ? 2 : 1;
      const std::string base =
          "layer" + std::to_string(layer) + "." + std::to_string(block);
      cur = resnet_bottleneck(g, base, cur, mid, out_ch, stride);
    }
    stages[std::size_t(layer)] = cur;
  }
  return stages;
}

inline std::array<int, 5> encode_opaque(ModelGraph& g,
                                        const BackboneProfile& p, int input,
                                        int h, int w) {
  std::array<int, 5> stages{};
  int cur = input;
  for (int i = 1; i <= 5; ++i) {
    cur = g.add_opaque("stage" + std::to_string(i), Component::Encoder, cur,
                       Shape{1, p.depth(i), h >> i, w >> i});
    stages[std::size_t(i - 1)] = cur;
  }
  return stages;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// build_model: wire the whole graph.

inline ModelGraph build_model(const BackboneProfile& profile,
                              const DecoderConfig& cfg, int input_h,
                              int input_w, bool allocate,
                              std::uint32_t seed = 1) {
  require(input_h >= 32 && input_w >= 32 && input_h % 32 == 0 &&
              input_w % 32 == 0,
          "build_model: input ", input_h, "x", input_w,
          " must be a positive multiple of 32");
  require(cfg.r >= 1, "build_model: compression ratio must be >= 1");
  require(cfg.pcsp_count >= 0 && cfg.pcsp_count <= 4,
          "build_model: pcsp_count ", cfg.pcsp_count, " outside 0..4");
  for (int i = 1; i <= 5; ++i)
    require(profile.depth(i) >= cfg.r, "build_model: stage ", i, " depth ",
            profile.depth(i), " under compression ratio ", cfg.r,
            " drops below one channel");
  require(!allocate || profile.trainable, "build_model: profile '",
          profile.name, "' is structural-only and cannot be allocated");

  const int h5 = input_h >> 5, w5 = input_w >> 5;
  auto side_depth = [&](int i) {
    return round_div_min1(profile.depth(i), cfg.r);
  };
  const int d_g = cfg.d_g > 0 ? cfg.d_g : side_depth(5);

  if (cfg.ppm_enabled) {
    require(!cfg.bins.empty(), "build_model: ppm enabled with no bins");
    for (std::size_t i = 0; i < cfg.bins.size(); ++i) {
      require(cfg.bins[i] >= 1, "build_model: ppm bins must be positive");
      require(i == 0 || cfg.bins[i] > cfg.bins[i - 1],
              "build_model: ppm bins must be strictly increasing");
    }
    require(cfg.bins.back() <= h5 && cfg.bins.back() <= w5,
            "build_model: ppm bin ", cfg.bins.back(),
            " exceeds the top feature size ", h5, "x", w5);
  }

  ModelGraph g;
  g.backbone_name = profile.name;
  g.backbone_depths = profile.depths;
  g.cfg = cfg;
  g.start(Shape{1, 3, input_h, input_w}, allocate, seed);
  const int input = g.add_input("input");

  // Encoder.
  std::array<int, 5> enc{};
  if (profile.name == "tiny")
    enc = detail::encode_tiny(g, profile, input);
  else if (profile.name == "resnet50")
    enc = detail::encode_resnet50(g, input);
  else
    enc = detail::encode_opaque(g, profile, input, input_h, input_w);

  // Side compression: F_i = conv1x1(relu(E_i)).
  std::array<int, 5> side{};
  for (int i = 1; i <= 5; ++i) {
    const std::string base = "side" + std::to_string(i);
    int r = g.add_pointwise(base + ".relu", Component::SideCompression,
                            OpKind::Relu, enc[std::size_t(i - 1)]);
    side[std::size_t(i - 1)] =
        g.add_conv(base + ".conv", Component::SideCompression, r,
                   side_depth(i), 1, 1, 0, true);
  }

  // Pyramid pooling on F_5 -> global feature G, plus per-stage branches G_j.
  int global_feature = -1;
  std::array<int, 6> global_j{};  // index by j = 2..5
  global_j.fill(-1);
  if (cfg.ppm_enabled) {
    const int branch_depth = round_div_min1(d_g, 4);
    std::vector<int> parts{side[4]};
    for (int b : cfg.bins) {
      const std::string base = "ppm.branch" + std::to_string(b);
      int pooled = g.add_adaptive_pool(base + ".pool", Component::Ppm,
                                       side[4], b);
      int mixed = pooled;
      if (cfg.ppm_branch_relu)
        mixed = g.add_pointwise(base + ".relu", Component::Ppm, OpKind::Relu,
                                mixed);
      mixed = g.add_conv(base + ".conv", Component::Ppm, mixed, branch_depth,
                         1, 1, 0, true);
      parts.push_back(
          g.add_resize(base + ".up", Component::Ppm, mixed, h5, w5));
    }
    int cat = g.add_concat("ppm.concat", Component::Ppm, parts);
    int fr = g.add_pointwise("ppm.fuse.relu", Component::Ppm, OpKind::Relu,
                             cat);
    global_feature =
        g.add_conv("ppm.fuse.conv", Component::Ppm, fr, d_g, 1, 1, 0, true);
    for (int j = 2; j <= 5; ++j) {
      const std::string base = "global" + std::to_string(j);
      int r = g.add_pointwise(base + ".relu", Component::Ppm, OpKind::Relu,
                              global_feature);
      int c = g.add_conv(base + ".conv", Component::Ppm, r, side_depth(6 - j),
                         1, 1, 0, true);
      global_j[std::size_t(j)] = g.add_resize(
          base + ".up", Component::Ppm, c, input_h >> (6 - j),
          input_w >> (6 - j));
    }
  }

  // Shortcut paths.
  const ShortcutPlan plan =
      make_shortcut_plan(profile, cfg, input_h, input_w);
  // shortcut_nodes[i][j]: node id of F_{i->j}.
  std::array<std::array<int, 6>, 6> shortcut_nodes{};
  for (auto& row : shortcut_nodes) row.fill(-1);
  for (const auto& path : plan.paths) {
    const int i = path.source_stage;
    int cur = side[std::size_t(i - 1)];
    for (const auto& hop : path.hops) {
      const std::string base = "pcsp" + std::to_string(i) + ".to" +
                               std::to_string(hop.target_stage);
      if (hop.has_conv)
        cur = g.add_conv(base + ".conv", Component::Pcsp, cur, hop.out_depth,
                         1, 1, 0, /*bias=*/false);
      cur = g.add_resize(base + ".up", Component::Pcsp, cur, hop.out_h,
                         hop.out_w);
      shortcut_nodes[std::size_t(i)][std::size_t(hop.target_stage)] = cur;
    }
  }

  // Context fusion per stage j = 2..5:
  //   hatF = conv1x1(relu(F_{6-j})) at unchanged depth,
  //   C_j  = conv1x1(relu(concat[hatF, shortcuts])) at depth d_{6-j}/r.
  std::array<int, 6> context_j{};
  context_j.fill(-1);
  for (int j = 2; j <= 5; ++j) {
    const int src = 6 - j;
    const std::string hat = "hatf" + std::to_string(src);
    int hr = g.add_pointwise(hat + ".relu", Component::Decoder, OpKind::Relu,
                             side[std::size_t(src - 1)]);
    int hatf = g.add_conv(hat + ".conv", Component::Decoder, hr,
                          side_depth(src), 1, 1, 0, true);
    std::vector<int> parts{hatf};
    for (int i = 5; i >= 2; --i)
      if (shortcut_nodes[std::size_t(i)][std::size_t(j)] >= 0)
        parts.push_back(shortcut_nodes[std::size_t(i)][std::size_t(j)]);
    const std::string base = "ctx" + std::to_string(j);
    int cat = parts.size() == 1
                  ? parts[0]
                  : g.add_concat(base + ".concat", Component::Decoder, parts);
    int cr = g.add_pointwise(base + ".relu", Component::Decoder, OpKind::Relu,
                             cat);
    context_j[std::size_t(j)] = g.add_conv(
        base + ".conv", Component::Decoder, cr, side_depth(src), 1, 1, 0,
        true);
  }

  // Decoder stages.
  int d_prev = -1;
  for (int j = 1; j <= 5; ++j) {
    const std::string base = "stage" + std::to_string(j);
    int fused_in;
    if (j == 1) {
      fused_in = side[4];
    } else {
      std::vector<int> parts{d_prev, side[std::size_t(5 - j)],
                             context_j[std::size_t(j)]};
      if (global_j[std::size_t(j)] >= 0)
        parts.push_back(global_j[std::size_t(j)]);
      fused_in = g.add_concat(base + ".concat", Component::Decoder, parts);
    }
    int r = g.add_pointwise(base + ".relu", Component::Decoder, OpKind::Relu,
                            fused_in);
    const int out_depth = side_depth(j == 5 ? 1 : 5 - j);
    int c = g.add_conv(base + ".conv", Component::Decoder, r, out_depth, 3, 1,
                       1, true);
    d_prev = g.add_resize(base + ".up", Component::Decoder, c,
                          input_h >> (5 - j), input_w >> (5 - j));
  }

  // Prediction head; D_5 already sits at the input resolution, so a resize
  // is emitted only for exotic stride schedules.
  int hr = g.add_pointwise("head.relu", Component::Head, OpKind::Relu,
                           d_prev);
  int hc = g.add_conv("head.conv", Component::Head, hr, 1, 1, 1, 0, true);
  const Shape hs = g.nodes()[std::size_t(hc)].out;
  if (hs.h != input_h || hs.w != input_w)
    hc = g.add_resize("head.up", Component::Head, hc, input_h, input_w);
  int out = g.add_pointwise("head.sigmoid", Component::Head, OpKind::Sigmoid,
                            hc);
  g.set_output(out);
  return g;
}

// ---------------------------------------------------------------------------
// Model file format: a short "key value" header naming the architecture,
// then a "data" line, then raw little-endian float32 parameter values in
// registry order.

inline void save_model(const ModelGraph& g, const std::string& path) {
  require(g.allocated(), "save_model: graph has no parameter data");
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "save_model: cannot open '", path, "' for writing");
  out << "DNTDF-MODEL 1\n";
  out << "backbone " << g.backbone_name << "\n";
  out << "widths";
  for (int d : g.backbone_depths) out << " " << d;
  out << "\n";
  out << "input " << g.input_shape().h << " " << g.input_shape().w << "\n";
  out << "r " << g.cfg.r << "\n";
  out << "pcsp " << g.cfg.pcsp_count << "\n";
  out << "ppm " << (g.cfg.ppm_enabled ? 1 : 0) << "\n";
  out << "ppm_branch_relu " << (g.cfg.ppm_branch_relu ? 1 : 0) << "\n";
  out << "bins";
  for (int b : g.cfg.bins) out << " " << b;
  out << "\n";
  out << "d_g " << g.cfg.d_g << "\n";
  out << "seed " << g.seed << "\n";
  out << "data\n";
  for (const auto& p : g.params()) {
    static_assert(sizeof(float) == 4);
    const auto& v = p.vec();
    out.write(reinterpret_cast<const char*>(v.data()),
              std::streamsize(v.size() * 4));
  }
  require(bool(out), "save_model: short write to '", path, "'");
}

inline ModelGraph load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "load_model: cannot open '", path, "'");
  std::string line;
  require(std::getline(in, line) && line == "DNTDF-MODEL 1",
          "load_model: '", path, "' is not a model file (bad magic)");
  std::string backbone = "tiny";
  std::array<int, 5> widths{8, 16, 32, 64, 128};
  int input_h = 64, input_w = 64;
  DecoderConfig cfg;
  std::uint32_t seed = 1;
  bool saw_data = false;
  while (std::getline(in, line)) {
    if (line == "data") {
      saw_data = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "backbone")
      ls >> backbone;
    else if (key == "widths")
      for (auto& d : widths) ls >> d;
    else if (key == "input")
      ls >> input_h >> input_w;
    else if (key == "r")
      ls >> cfg.r;
    else if (key == "pcsp")
      ls >> cfg.pcsp_count;
    else if (key == "ppm") {
      int v = 0;
      ls >> v;
      cfg.ppm_enabled = v != 0;
    } else if (key == "ppm_branch_relu") {
      int v = 0;
      ls >> v;
      cfg.ppm_branch_relu = v != 0;
    } else if (key == "bins") {
      cfg.bins.clear();
      int b;
      while (ls >> b) cfg.bins.push_back(b);
      require(ls.eof() && !cfg.bins.empty(),
              "load_model: malformed header line '", line, "'");
      continue;  // the extraction loop leaves the stream in a failed state
    } else if (key == "d_g")
      ls >> cfg.d_g;
    else if (key == "seed")
      ls >> seed;
    else
      fail("load_model: unknown header key '", key, "' in '", path, "'");
    require(!ls.fail(), "load_model: malformed header line '", line, "'");
  }
  require(saw_data, "load_model: missing data section in '", path, "'");

  BackboneProfile profile = profile_by_name(backbone);
  if (backbone == "tiny") profile = tiny_profile(widths);
  require(profile.trainable, "load_model: profile '", backbone,
          "' carries no trainable parameters");
  ModelGraph g = build_model(profile, cfg, input_h, input_w,
                             /*allocate=*/true, seed);
  for (auto& p : g.params()) {
    auto& v = p.mutable_vec();
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4));
    require(in.gcount() == std::streamsize(v.size() * 4),
            "load_model: '", path, "' truncated (expected ",
            g.param_scalars(), " parameter values)");
  }
  char extra;
  require(!in.read(&extra, 1), "load_model: trailing bytes in '", path, "'");
  return g;
}

}  // namespace dntdf
