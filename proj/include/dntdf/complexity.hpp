#pragma once

// Static cost accounting over a ModelGraph: exact integer parameter and MAC
// counts per layer, per component, and in total. "FLOPs" figures are MAC
// counts — one multiply-accumulate per unit — which is the convention the
// architecture's published totals follow.
//
// Counting rules (MACs at the graph's annotated shapes):
//   conv            H_out*W_out*C_in*C_out*k^2   (bias adds params, no MACs)
//   bilinear resize 4 per output element
//   pooling         1 per element read: adaptive = H_in*W_in*C per call,
//                   max pool = H_out*W_out*k^2*C
//   activations, batch norm, add, concat: 0 MACs (batch norm owns 2C params)

#include <array>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dntdf/model.hpp"
#include "dntdf/profiles.hpp"

namespace dntdf {

struct LayerCost {
  int node_id = -1;
  std::string name;
  OpKind kind = OpKind::Input;
  Component component = Component::Encoder;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::array<std::int64_t, 6> params_by_component{};
  std::array<std::int64_t, 6> macs_by_component{};
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;

  std::int64_t params_of(Component c) const {
    return params_by_component[std::size_t(c)];
  }
  std::int64_t macs_of(Component c) const {
    return macs_by_component[std::size_t(c)];
  }
  // Decoder scope in the lightweight-table sense: everything that is not the
  // backbone (side compressions, PCSP, PPM, stage fusion, head).
  std::int64_t decoder_params() const {
    return total_params - params_of(Component::Encoder);
  }
  std::int64_t decoder_macs() const {
    return total_macs - macs_of(Component::Encoder);
  }
};

namespace detail {

inline std::int64_t node_params(const GraphNode& n, const Shape& in) {
  switch (n.kind) {
    case OpKind::Conv: {
      const std::int64_t w =
          std::int64_t(n.out.c) * in.c * n.kernel * n.kernel;
      return w + (n.has_bias ? n.out.c : 0);
    }
    case OpKind::BatchNorm:
      return 2 * std::int64_t(n.out.c);
    default:
      return 0;
  }
}

inline std::int64_t node_macs(const GraphNode& n, const Shape& in) {
  switch (n.kind) {
    case OpKind::Conv:
      return std::int64_t(n.out.h) * n.out.w * in.c * n.out.c * n.kernel *
             n.kernel;
    case OpKind::Resize:
      return 4ll * n.out.c * n.out.h * n.out.w;
    case OpKind::AdaptiveAvgPool:
      return std::int64_t(in.h) * in.w * in.c;
    case OpKind::MaxPool:
      return std::int64_t(n.out.h) * n.out.w * n.kernel * n.kernel * in.c;
    default:
      return 0;
  }
}

inline CostReport analyze(const ModelGraph& g) {
  CostReport r;
  r.layers.reserve(g.nodes().size());
  for (const GraphNode& n : g.nodes()) {
    const Shape in = n.inputs.empty() ? n.out : g.nodes()[n.inputs[0]].out;
    LayerCost c;
    c.node_id = n.id;
    c.name = n.name;
    c.kind = n.kind;
    c.component = n.component;
    c.params = node_params(n, in);
    c.macs = node_macs(n, in);
    r.params_by_component[std::size_t(n.component)] += c.params;
    r.macs_by_component[std::size_t(n.component)] += c.macs;
    r.total_params += c.params;
    r.total_macs += c.macs;
    r.layers.push_back(std::move(c));
  }
  return r;
}

}  // namespace detail

// Parameter accounting; the returned report also carries the MAC figures at
// the graph's build-time input size, so one walk serves both views.
inline CostReport count_params(const ModelGraph& g) {
  return detail::analyze(g);
}

// MAC accounting at the input size the graph was built with.
inline CostReport count_flops(const ModelGraph& g) { return detail::analyze(g); }

// Human-readable count: largest of K/M/G keeping the mantissa >= 1, three
// decimals, round-half-up, exact in integer arithmetic.
inline std::string format_count(std::int64_t n) {
  require(n >= 0, "format_count: negative count");
  std::int64_t unit = 1;
  const char* suffix = "";
  if (n >= 1000000000ll) {
    unit = 1000000000ll;
    suffix = "G";
  } else if (n >= 1000000ll) {
    unit = 1000000ll;
    suffix = "M";
  } else if (n >= 1000ll) {
    unit = 1000ll;
    suffix = "K";
  } else {
    return std::to_string(n);
  }
  const std::int64_t milli = (n * 1000 + unit / 2) / unit;
  std::ostringstream os;
  os << milli / 1000 << "." << std::setw(3) << std::setfill('0')
     << milli % 1000 << suffix;
  return os.str();
}

struct CostRow {
  int r = 0;
  std::int64_t decoder_params = 0;
  std::int64_t decoder_macs = 0;
};

// One decoder-cost row per compression ratio, at the given square input.
// Graphs are built without allocating weights, so any backbone profile works.
inline std::vector<CostRow> cost_table(const BackboneProfile& profile,
                                       DecoderConfig cfg,
                                       const std::vector<int>& r_values,
                                       int input_size) {
  require(!r_values.empty(), "cost_table: no compression ratios given");
  std::vector<CostRow> rows;
  for (int r : r_values) {
    cfg.r = r;
    ModelGraph g = build_model(profile, cfg, input_size, input_size, false);
    const CostReport rep = detail::analyze(g);
    rows.push_back({r, rep.decoder_params(), rep.decoder_macs()});
  }
  return rows;
}

inline std::string render_cost_table(const std::vector<CostRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "r" << std::setw(22) << "decoder-params"
     << "decoder-flops\n";
  for (const CostRow& row : rows) {
    std::ostringstream p, f;
    p << row.decoder_params << " (" << format_count(row.decoder_params)
      << ")";
    f << row.decoder_macs << " (" << format_count(row.decoder_macs) << ")";
    os << std::left << std::setw(6) << row.r << std::setw(22) << p.str()
       << f.str() << "\n";
  }
  return os.str();
}

inline std::string cost_table_csv(const std::vector<CostRow>& rows) {
  std::ostringstream os;
  os << "r,decoder_params,decoder_flops\n";
  for (const CostRow& row : rows)
    os << row.r << "," << row.decoder_params << "," << row.decoder_macs
       << "\n";
  return os.str();
}

// Per-layer listing with component subtotals and grand totals.
inline std::string render_cost_report(const CostReport& rep) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "layer" << std::setw(20) << "component"
     << std::right << std::setw(14) << "params" << std::setw(16) << "flops"
     << "\n";
  for (const LayerCost& c : rep.layers) {
    if (c.params == 0 && c.macs == 0) continue;  // structural nodes
    os << std::left << std::setw(28) << c.name << std::setw(20)
       << component_name(c.component) << std::right << std::setw(14)
       << c.params << std::setw(16) << c.macs << "\n";
  }
  static const Component order[] = {
      Component::Encoder, Component::SideCompression, Component::Pcsp,
      Component::Ppm,     Component::Decoder,         Component::Head};
  for (Component comp : order)
    os << std::left << std::setw(28)
       << (std::string("subtotal ") + component_name(comp)) << std::setw(20)
       << "" << std::right << std::setw(14) << rep.params_of(comp)
       << std::setw(16) << rep.macs_of(comp) << "\n";
  os << std::left << std::setw(28) << "total" << std::setw(20) << ""
     << std::right << std::setw(14) << rep.total_params << std::setw(16)
     << rep.total_macs << "\n";
  os << std::left << std::setw(28) << "decoder scope" << std::setw(20) << ""
     << std::right << std::setw(14) << rep.decoder_params() << std::setw(16)
     << rep.decoder_macs() << "\n";
  return os.str();
}

inline std::string cost_report_csv(const CostReport& rep) {
  std::ostringstream os;
  os << "layer,kind,component,params,flops\n";
  for (const LayerCost& c : rep.layers)
    os << c.name << "," << op_kind_name(c.kind) << ","
       << component_name(c.component) << "," << c.params << "," << c.macs
       << "\n";
  return os.str();
}

}  // namespace dntdf
