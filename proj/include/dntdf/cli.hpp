#pragma once

// Command-line front end: synth / train / eval / predict / count. All state
// flows through run_cli so tests can drive the tool in-process; exit codes
// are 0 success, 2 usage error, 1 runtime error.

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dntdf/complexity.hpp"
#include "dntdf/data.hpp"
#include "dntdf/model.hpp"
#include "dntdf/netpbm.hpp"
#include "dntdf/synth.hpp"
#include "dntdf/train.hpp"

namespace dntdf {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline int to_int(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  require(used == v.size() && !v.empty(), "config: '", key,
          "' expects an integer, got '", v, "'");
  return out;
}

inline double to_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  require(used == v.size() && !v.empty(), "config: '", key,
          "' expects a number, got '", v, "'");
  return out;
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  fail("config: '", key, "' expects true/false, got '", v, "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

inline std::vector<int> to_int_list(const std::string& v,
                                    const std::string& key) {
  std::vector<int> out;
  for (const std::string& p : split_list(v)) out.push_back(to_int(p, key));
  return out;
}

}  // namespace detail

// Training run description: "key = value" lines, '#' starts a comment,
// unknown keys are errors so typos fail loudly.
inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg = desk_defaults();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, "config line ", lineno,
            ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    require(!key.empty() && !val.empty(), "config line ", lineno,
            ": expected 'key = value'");

    if (key == "backbone") {
      cfg.backbone = val;
    } else if (key == "widths") {
      const std::vector<int> w = detail::to_int_list(val, key);
      require(w.size() == 5, "config: 'widths' expects 5 values, got ",
              int(w.size()));
      for (int i = 0; i < 5; ++i) cfg.tiny_widths[std::size_t(i)] = w[std::size_t(i)];
    } else if (key == "r") {
      cfg.decoder.r = detail::to_int(val, key);
    } else if (key == "pcsp") {
      cfg.decoder.pcsp_count = detail::to_int(val, key);
    } else if (key == "ppm") {
      cfg.decoder.ppm_enabled = detail::to_bool(val, key);
    } else if (key == "bins") {
      cfg.decoder.bins = detail::to_int_list(val, key);
    } else if (key == "seed") {
      cfg.seed = std::uint32_t(detail::to_int(val, key));
    } else if (key == "epochs") {
      cfg.epochs = detail::to_int(val, key);
    } else if (key == "lr") {
      cfg.lr = detail::to_double(val, key);
    } else if (key == "lr_drop_epoch") {
      cfg.lr_drop_epoch = detail::to_int(val, key);
    } else if (key == "batch_size") {
      cfg.batch_size = detail::to_int(val, key);
    } else if (key == "augment") {
      cfg.augment = detail::to_bool(val, key);
    } else if (key == "scales") {
      cfg.aug.scales.clear();
      for (const std::string& p : detail::split_list(val))
        cfg.aug.scales.push_back(float(detail::to_double(p, key)));
    } else if (key == "gamma") {
      cfg.loss.gamma = detail::to_double(val, key);
    } else if (key == "delta") {
      cfg.loss.delta = detail::to_int(val, key);
    } else if (key == "normalize_loss") {
      cfg.loss.normalize = detail::to_bool(val, key);
    } else if (key == "input_size") {
      cfg.input_size = detail::to_int(val, key);
    } else if (key == "train_images") {
      cfg.train_images = val;
    } else if (key == "train_masks") {
      cfg.train_masks = val;
    } else if (key == "synth_n") {
      cfg.synth_n = detail::to_int(val, key);
    } else if (key == "data_seed") {
      cfg.data_seed = std::uint32_t(detail::to_int(val, key));
    } else if (key == "out_model") {
      cfg.out_model = val;
    } else {
      fail("config line ", lineno, ": unknown key '", key, "'");
    }
  }
  cfg.validate();
  return cfg;
}

namespace detail {

// Flag parser: every option takes a value; unknown flags throw UsageError.
struct UsageError {
  std::string message;
};

inline std::map<std::string, std::string> parse_flags(
    const std::vector<std::string>& args, std::size_t from,
    const std::vector<std::string>& allowed) {
  std::map<std::string, std::string> flags;
  for (std::size_t i = from; i < args.size(); i += 2) {
    const std::string& name = args[i];
    bool ok = false;
    for (const std::string& a : allowed) ok = ok || name == "--" + a;
    if (!ok) throw UsageError{"unknown option '" + name + "'"};
    if (i + 1 >= args.size())
      throw UsageError{"option '" + name + "' needs a value"};
    flags[name.substr(2)] = args[i + 1];
  }
  return flags;
}

inline std::string flag_or(const std::map<std::string, std::string>& flags,
                           const std::string& name, const std::string& dflt) {
  const auto it = flags.find(name);
  return it == flags.end() ? dflt : it->second;
}

inline std::string need_flag(const std::map<std::string, std::string>& flags,
                             const std::string& name) {
  const auto it = flags.find(name);
  if (it == flags.end()) throw UsageError{"missing required --" + name};
  return it->second;
}

inline void usage(std::ostream& err) {
  err << "usage: dntdf <command> [options]\n"
         "  synth    --out DIR [--n 500] [--size 64] [--seed 1]\n"
         "  train    --config FILE\n"
         "  eval     --model FILE --images DIR --masks DIR\n"
         "           [--report FILE] [--average per-image|pooled]\n"
         "  predict  --model FILE --images DIR --out DIR\n"
         "  count    [--backbone resnet50] [--r 4] [--input 288]\n"
         "           [--pcsp 4] [--ppm on] [--bins 1,2,3,6]\n"
         "           [--table r1,r2,...] [--csv FILE]\n";
}

inline int cmd_synth(const std::map<std::string, std::string>& flags,
                     std::ostream& out) {
  const int n = to_int(flag_or(flags, "n", "500"), "--n");
  const int size = to_int(flag_or(flags, "size", "64"), "--size");
  const int seed = to_int(flag_or(flags, "seed", "1"), "--seed");
  const std::string dir = need_flag(flags, "out");
  save_dataset(synth_generate(n, size, std::uint32_t(seed)), dir);
  out << "wrote " << n << " samples to " << dir << "\n";
  return 0;
}

inline std::vector<Sample> training_data(const RunConfig& cfg) {
  if (!cfg.train_images.empty()) {
    require(!cfg.train_masks.empty(),
            "config: 'train_images' needs 'train_masks'");
    return load_samples(cfg.train_images, cfg.train_masks);
  }
  require(cfg.synth_n > 0,
          "config: set 'train_images'/'train_masks' or 'synth_n'");
  const std::uint32_t ds = cfg.data_seed ? cfg.data_seed : cfg.seed;
  return synth_generate(cfg.synth_n, cfg.input_size, ds);
}

inline int cmd_train(const std::map<std::string, std::string>& flags,
                     std::ostream& out) {
  const std::string path = need_flag(flags, "config");
  std::ifstream in(path);
  require(in.good(), "train: cannot open config '", path, "'");
  const RunConfig cfg = parse_config(in);
  const TrainResult res = train(cfg, training_data(cfg), &out);
  save_model(res.model, cfg.out_model);
  out << "saved " << cfg.out_model << "\n";
  return 0;
}

inline int cmd_eval(const std::map<std::string, std::string>& flags,
                    std::ostream& out) {
  const ModelGraph model = load_model(need_flag(flags, "model"));
  const std::vector<Sample> data =
      load_samples(need_flag(flags, "images"), need_flag(flags, "masks"));
  const std::string avg = flag_or(flags, "average", "per-image");
  require(avg == "per-image" || avg == "pooled",
          "eval: --average expects per-image or pooled, got '", avg, "'");
  const MetricReport rep = evaluate(
      model, data, avg == "pooled" ? FAverage::Pooled : FAverage::PerImage);
  out << rep.serialize();
  const std::string report = flag_or(flags, "report", "");
  if (!report.empty()) {
    std::ofstream rf(report);
    require(rf.good(), "eval: cannot write '", report, "'");
    rf << rep.serialize();
    std::ofstream pf(report + ".pr.csv");
    require(pf.good(), "eval: cannot write '", report, ".pr.csv'");
    pf << rep.pr_csv();
  }
  return 0;
}

inline int cmd_predict(const std::map<std::string, std::string>& flags,
                       std::ostream& out) {
  const ModelGraph model = load_model(need_flag(flags, "model"));
  const std::vector<Sample> data = load_images(need_flag(flags, "images"));
  const std::string dir = need_flag(flags, "out");
  std::filesystem::create_directories(dir);
  for (const Sample& s : data) {
    const Tensor pred = predict(model, s.image);
    const Shape ps = pred.shape();
    const std::vector<std::uint8_t> bytes = tensor_to_bytes(pred);
    write_pgm((std::filesystem::path(dir) / (s.id + ".pgm")).string(), ps.w,
              ps.h, bytes.data());
  }
  out << "wrote " << data.size() << " maps to " << dir << "\n";
  return 0;
}

inline int cmd_count(const std::map<std::string, std::string>& flags,
                     std::ostream& out) {
  const std::string backbone = flag_or(flags, "backbone", "resnet50");
  const int input = to_int(flag_or(flags, "input", "288"), "--input");
  DecoderConfig cfg;
  cfg.r = to_int(flag_or(flags, "r", "4"), "--r");
  cfg.pcsp_count = to_int(flag_or(flags, "pcsp", "4"), "--pcsp");
  cfg.ppm_enabled = to_bool(flag_or(flags, "ppm", "on"), "--ppm");
  const std::string bins = flag_or(flags, "bins", "");
  if (!bins.empty()) cfg.bins = to_int_list(bins, "--bins");
  const BackboneProfile profile = profile_by_name(backbone);

  const std::string table = flag_or(flags, "table", "");
  std::string text, csv;
  if (!table.empty()) {
    const std::vector<CostRow> rows =
        cost_table(profile, cfg, to_int_list(table, "--table"), input);
    text = render_cost_table(rows);
    csv = cost_table_csv(rows);
  } else {
    const CostReport rep =
        count_params(build_model(profile, cfg, input, input, false));
    text = render_cost_report(rep);
    csv = cost_report_csv(rep);
  }
  out << text;
  const std::string csv_path = flag_or(flags, "csv", "");
  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    require(f.good(), "count: cannot write '", csv_path, "'");
    f << csv;
  }
  return 0;
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  using detail::parse_flags;
  try {
    if (args.empty()) throw detail::UsageError{"missing command"};
    const std::string& cmd = args[0];
    if (cmd == "synth")
      return detail::cmd_synth(
          parse_flags(args, 1, {"n", "size", "seed", "out"}), out);
    if (cmd == "train")
      return detail::cmd_train(parse_flags(args, 1, {"config"}), out);
    if (cmd == "eval")
      return detail::cmd_eval(
          parse_flags(args, 1, {"model", "images", "masks", "report", "average"}),
          out);
    if (cmd == "predict")
      return detail::cmd_predict(
          parse_flags(args, 1, {"model", "images", "out"}), out);
    if (cmd == "count")
      return detail::cmd_count(
          parse_flags(args, 1,
                      {"backbone", "r", "input", "pcsp", "ppm", "bins",
                       "table", "csv"}),
          out);
    throw detail::UsageError{"unknown command '" + cmd + "'"};
  } catch (const detail::UsageError& u) {
    err << "error: " << u.message << "\n";
    detail::usage(err);
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dntdf
