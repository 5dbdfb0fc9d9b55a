// Data pipeline, synthesis, training loop, and command-line behavior.

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dntdf/cli.hpp"
#include "dntdf/data.hpp"
#include "dntdf/loss.hpp"
#include "dntdf/netpbm.hpp"
#include "dntdf/synth.hpp"
#include "dntdf/train.hpp"

using namespace dntdf;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test run; removed eagerly so reruns start clean.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path.string() : (path / rel).string();
  }
};

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  REQUIRE(f.good());
}

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.vec() == b.vec();
}

}  // namespace

TEST_CASE("netpbm files round-trip and malformed headers are rejected") {
  TempDir dir("dntdf_t_netpbm");

  Rng rng(11);
  std::vector<std::uint8_t> gray(48 * 32);
  for (auto& b : gray) b = std::uint8_t(rng.below(256));
  write_pgm(dir.str("g.pgm"), 48, 32, gray.data());
  const PnmImage g = read_pnm(dir.str("g.pgm"));
  REQUIRE(g.width == 48);
  REQUIRE(g.height == 32);
  REQUIRE(g.channels == 1);
  REQUIRE(g.maxval == 255);
  REQUIRE(g.data == gray);

  std::vector<std::uint8_t> rgb(3 * 20 * 10);
  for (auto& b : rgb) b = std::uint8_t(rng.below(256));
  write_ppm(dir.str("c.ppm"), 20, 10, rgb.data());
  const PnmImage c = read_pnm(dir.str("c.ppm"));
  REQUIRE(c.width == 20);
  REQUIRE(c.height == 10);
  REQUIRE(c.channels == 3);
  REQUIRE(c.data == rgb);

  // Comments and flexible whitespace in the header are legal.
  write_file(dir.str("k.pgm"),
             "P5 # magic\n# a full comment line\n 4 # width\n\t2\n255\n" +
                 std::string(8, 'x'));
  const PnmImage k = read_pnm(dir.str("k.pgm"));
  REQUIRE(k.width == 4);
  REQUIRE(k.height == 2);
  REQUIRE(k.data == std::vector<std::uint8_t>(8, std::uint8_t('x')));

  write_file(dir.str("bad_magic.pgm"), "P4\n4 2\n255\n12345678");
  REQUIRE_THROWS_WITH(read_pnm(dir.str("bad_magic.pgm")),
                      Catch::Matchers::ContainsSubstring("byte 0"));

  write_file(dir.str("short.pgm"), "P5\n4 4\n255\n" + std::string(10, 'x'));
  REQUIRE_THROWS_WITH(read_pnm(dir.str("short.pgm")),
                      Catch::Matchers::ContainsSubstring("raster needs"));

  write_file(dir.str("deep.pgm"),
             "P5\n2 2\n65535\n" + std::string(8, 'x'));
  REQUIRE_THROWS_WITH(read_pnm(dir.str("deep.pgm")),
                      Catch::Matchers::ContainsSubstring("8-bit"));

  write_file(dir.str("trailing.pgm"), "P5\n2 2\n255\n" + std::string(5, 'x'));
  REQUIRE_THROWS(read_pnm(dir.str("trailing.pgm")));

  write_file(dir.str("nonnum.pgm"), "P5\nfour 2\n255\n" + std::string(8, 'x'));
  REQUIRE_THROWS_WITH(read_pnm(dir.str("nonnum.pgm")),
                      Catch::Matchers::ContainsSubstring("malformed"));

  REQUIRE_THROWS(read_pnm(dir.str("missing.pgm")));
}

TEST_CASE("synthetic scenes are seed-deterministic with bounded foreground") {
  const std::vector<Sample> a = synth_generate(6, 64, 9);
  const std::vector<Sample> b = synth_generate(6, 64, 9);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].id == b[i].id);
    REQUIRE(same_values(a[i].image, b[i].image));
    REQUIRE(same_values(a[i].mask, b[i].mask));
  }
  const std::vector<Sample> other = synth_generate(6, 64, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    differs = differs || !same_values(a[i].image, other[i].image);
  REQUIRE(differs);

  // Foreground fraction stays inside the rejection window, scenes are RGB
  // with binary masks, and every mask has both deep-interior and deep-exterior
  // pixels (zero boundary weight somewhere on each side).
  const std::vector<Sample> many = synth_generate(300, 64, 21);
  for (const Sample& s : many) {
    REQUIRE(s.image.shape() == Shape{1, 3, 64, 64});
    REQUIRE(s.mask.shape() == Shape{1, 1, 64, 64});
    double fg = 0;
    for (float v : s.mask.vec()) {
      REQUIRE((v == 0.0f || v == 1.0f));
      fg += double(v);
    }
    fg /= double(s.mask.numel());
    REQUIRE(fg >= 0.05);
    REQUIRE(fg <= 0.6);
    for (float v : s.image.vec()) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
  for (int i = 0; i < 20; ++i) {
    const Sample& s = many[std::size_t(i)];
    const Tensor alpha = edge_weight_alpha(s.mask, 1);
    bool interior = false, exterior = false;
    for (std::size_t j = 0; j < alpha.numel(); ++j) {
      if (alpha.vec()[j] != 0.0f) continue;
      (s.mask.vec()[j] == 1.0f ? interior : exterior) = true;
    }
    REQUIRE(interior);
    REQUIRE(exterior);
  }

  REQUIRE_THROWS(synth_generate(1, 60, 1));
  REQUIRE_THROWS(synth_generate(0, 64, 1));
}

TEST_CASE("crop and pad center content and sizes normalize to 32-multiples") {
  REQUIRE(round_to_multiple(70, 32) == 64);
  REQUIRE(round_to_multiple(16, 32) == 32);
  REQUIRE(round_to_multiple(48, 32) == 64);  // exact tie rounds up
  REQUIRE(round_to_multiple(64, 32) == 64);
  REQUIRE(round_to_multiple(1, 32) == 32);

  // Crop 70 -> 64 drops floor(6/2) = 3 leading rows and columns.
  Tensor big(Shape{1, 1, 70, 70}, 0.25f);
  big.mutable_vec()[std::size_t(10) * 70 + 20] = 0.75f;
  const Tensor cropped = crop_pad(big, 64, 64, 0.0f);
  REQUIRE(cropped.shape() == Shape{1, 1, 64, 64});
  REQUIRE(cropped.at(0, 0, 7, 17) == 0.75f);
  REQUIRE(cropped.at(0, 0, 7, 16) == 0.25f);

  // Pad 16 -> 32 inserts (32-16)/2 = 8 fill rows and columns on each side.
  Tensor small(Shape{1, 1, 16, 16}, 0.25f);
  small.mutable_vec()[std::size_t(2) * 16 + 5] = 0.75f;
  const Tensor padded = crop_pad(small, 32, 32, 0.5f);
  REQUIRE(padded.shape() == Shape{1, 1, 32, 32});
  REQUIRE(padded.at(0, 0, 10, 13) == 0.75f);
  REQUIRE(padded.at(0, 0, 0, 0) == 0.5f);
  REQUIRE(padded.at(0, 0, 31, 31) == 0.5f);
  REQUIRE(padded.at(0, 0, 8, 8) == 0.25f);

  // normalize_size pads images with neutral gray and masks with background.
  Sample s;
  s.id = "odd";
  s.image = Tensor(Shape{1, 3, 70, 70}, 0.9f);
  s.mask = Tensor(Shape{1, 1, 70, 70}, 1.0f);
  const Sample n = normalize_size(s);
  REQUIRE(n.image.shape() == Shape{1, 3, 64, 64});
  REQUIRE(n.mask.shape() == Shape{1, 1, 64, 64});

  Sample t;
  t.id = "tiny";
  t.image = Tensor(Shape{1, 3, 16, 16}, 0.9f);
  t.mask = Tensor(Shape{1, 1, 16, 16}, 1.0f);
  const Sample p = normalize_size(t);
  REQUIRE(p.image.at(0, 0, 0, 0) == 0.5f);
  REQUIRE(p.mask.at(0, 0, 0, 0) == 0.0f);
  REQUIRE(p.image.at(0, 0, 16, 16) == 0.9f);
  REQUIRE(p.mask.at(0, 0, 16, 16) == 1.0f);
}

TEST_CASE("augmentation keeps shapes and mask binarity") {
  const Sample base = synth_generate(1, 64, 33)[0];
  Rng rng(5);
  AugmentConfig cfg;
  for (int i = 0; i < 50; ++i) {
    const Sample aug = augment(base, cfg, rng);
    REQUIRE(aug.image.shape() == base.image.shape());
    REQUIRE(aug.mask.shape() == base.mask.shape());
    for (float v : aug.mask.vec()) REQUIRE((v == 0.0f || v == 1.0f));
    for (float v : aug.image.vec()) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }

  // Identity config is a bitwise no-op.
  AugmentConfig id;
  id.flip = false;
  id.scales = {1.0f};
  for (int i = 0; i < 5; ++i) {
    const Sample same = augment(base, id, rng);
    REQUIRE(same_values(same.image, base.image));
    REQUIRE(same_values(same.mask, base.mask));
  }

  // Mirroring twice restores the original exactly.
  REQUIRE(same_values(flip_horizontal(flip_horizontal(base.image)),
                      base.image));
  Tensor probe(Shape{1, 1, 2, 3}, 0.0f);
  probe.mutable_vec() = {1, 2, 3, 4, 5, 6};
  const Tensor flipped = flip_horizontal(probe);
  REQUIRE(flipped.vec() == std::vector<float>{3, 2, 1, 6, 5, 4});

  AugmentConfig bad;
  bad.scales = {};
  REQUIRE_THROWS(bad.validate());
  AugmentConfig neg;
  neg.scales = {-1.0f};
  REQUIRE_THROWS(neg.validate());
}

TEST_CASE("datasets survive a save and load round-trip") {
  TempDir dir("dntdf_t_dataset");
  const std::vector<Sample> made = synth_generate(5, 64, 3);
  save_dataset(made, dir.str());

  const std::vector<Sample> back =
      load_samples(dir.str("images"), dir.str("masks"));
  REQUIRE(back.size() == made.size());
  for (std::size_t i = 0; i < made.size(); ++i) {
    REQUIRE(back[i].id == made[i].id);
    REQUIRE(back[i].image.shape() == made[i].image.shape());
    REQUIRE(same_values(back[i].mask, made[i].mask));  // binary -> exact
    const auto& a = made[i].image.vec();
    const auto& b = back[i].image.vec();
    for (std::size_t j = 0; j < a.size(); ++j)
      REQUIRE(std::abs(double(a[j]) - double(b[j])) <=
              0.5 / 255.0 + 1e-7);  // one quantization step
  }

  // Pairing is strict in both directions.
  fs::remove(fs::path(dir.str("masks")) / (made[1].id + ".pgm"));
  REQUIRE_THROWS_WITH(load_samples(dir.str("images"), dir.str("masks")),
                      Catch::Matchers::ContainsSubstring(made[1].id));
  fs::remove(fs::path(dir.str("images")) / (made[1].id + ".ppm"));
  fs::remove(fs::path(dir.str("images")) / (made[2].id + ".ppm"));
  REQUIRE_THROWS_WITH(load_samples(dir.str("images"), dir.str("masks")),
                      Catch::Matchers::ContainsSubstring(made[2].id));

  const std::vector<Sample> imgs = load_images(dir.str("images"));
  REQUIRE(imgs.size() == 3);
  for (const Sample& s : imgs)
    for (float v : s.mask.vec()) REQUIRE(v == 0.0f);
}

TEST_CASE("run configs parse keys, comments, and reject typos") {
  std::istringstream in(
      "# full training recipe\n"
      "backbone = tiny\n"
      "widths = 4, 8, 16, 32, 64\n"
      "r = 2            # compression\n"
      "pcsp = 3\n"
      "ppm = false\n"
      "bins = 1, 2\n"
      "seed = 42\n"
      "epochs = 7\n"
      "lr = 0.005\n"
      "lr_drop_epoch = 5\n"
      "batch_size = 2\n"
      "augment = false\n"
      "scales = 0.9, 1.0, 1.1\n"
      "gamma = 2.5\n"
      "delta = 4\n"
      "normalize_loss = true\n"
      "input_size = 96\n"
      "synth_n = 12\n"
      "data_seed = 9\n"
      "out_model = out.dntdf\n");
  const RunConfig cfg = parse_config(in);
  REQUIRE(cfg.backbone == "tiny");
  REQUIRE(cfg.tiny_widths == std::array<int, 5>{4, 8, 16, 32, 64});
  REQUIRE(cfg.decoder.r == 2);
  REQUIRE(cfg.decoder.pcsp_count == 3);
  REQUIRE_FALSE(cfg.decoder.ppm_enabled);
  REQUIRE(cfg.decoder.bins == std::vector<int>{1, 2});
  REQUIRE(cfg.seed == 42);
  REQUIRE(cfg.epochs == 7);
  REQUIRE(cfg.lr == 0.005);
  REQUIRE(cfg.lr_drop_epoch == 5);
  REQUIRE(cfg.drop_epoch() == 5);
  REQUIRE(cfg.batch_size == 2);
  REQUIRE_FALSE(cfg.augment);
  REQUIRE(cfg.aug.scales == std::vector<float>{0.9f, 1.0f, 1.1f});
  REQUIRE(cfg.loss.gamma == 2.5);
  REQUIRE(cfg.loss.delta == 4);
  REQUIRE(cfg.loss.normalize);
  REQUIRE(cfg.input_size == 96);
  REQUIRE(cfg.synth_n == 12);
  REQUIRE(cfg.data_seed == 9);
  REQUIRE(cfg.out_model == "out.dntdf");

  std::istringstream dflt("synth_n = 1\n");
  const RunConfig d = parse_config(dflt);
  REQUIRE(d.epochs == 30);
  REQUIRE(d.drop_epoch() == 24);  // 0.8 of the schedule
  REQUIRE(d.decoder.r == 2);
  REQUIRE(d.decoder.bins == std::vector<int>{1, 2});

  std::istringstream bad("epoch = 7\n");
  REQUIRE_THROWS_WITH(parse_config(bad),
                      Catch::Matchers::ContainsSubstring("unknown key"));
  std::istringstream malformed("epochs\n");
  REQUIRE_THROWS_WITH(parse_config(malformed),
                      Catch::Matchers::ContainsSubstring("key = value"));
  std::istringstream notnum("epochs = soon\n");
  REQUIRE_THROWS_WITH(parse_config(notnum),
                      Catch::Matchers::ContainsSubstring("integer"));
  std::istringstream badsize("input_size = 60\nsynth_n = 1\n");
  REQUIRE_THROWS(parse_config(badsize));
}

TEST_CASE("training overfits one sample and the loss trend is seed-robust") {
  const std::vector<Sample> one = synth_generate(1, 64, 77);
  RunConfig cfg = desk_defaults();
  cfg.epochs = 150;
  cfg.augment = false;
  const TrainResult r = train(cfg, one);
  REQUIRE(r.trace.size() == 150);
  REQUIRE(r.trace.back().mean_loss < 0.1 * r.trace.front().mean_loss);
  REQUIRE(r.trace.front().lr == 0.001);
  REQUIRE(r.trace.back().lr == 0.0001);  // dropped from epoch 120 on
  REQUIRE(r.trace[118].lr == 0.001);
  REQUIRE(r.trace[119].lr == 0.0001);

  // The overfit model reproduces its training mask nearly perfectly.
  const MetricReport rep = evaluate(r.model, one);
  REQUIRE(rep.f_max > 0.99);
  REQUIRE(rep.mae < 0.03);

  // Mean loss falls across epochs for every seed.
  for (std::uint32_t seed : {1u, 2u, 3u}) {
    RunConfig c = desk_defaults();
    c.seed = seed;
    c.epochs = 6;
    const std::vector<Sample> data = synth_generate(200, 64, seed + 100);
    const TrainResult t = train(c, data);
    REQUIRE(t.trace.back().mean_loss < t.trace.front().mean_loss);
  }
}

TEST_CASE("a zero learning rate leaves parameters untouched") {
  const std::vector<Sample> data = synth_generate(2, 64, 5);
  RunConfig cfg = desk_defaults();
  cfg.epochs = 2;
  cfg.lr = 0.0;
  cfg.augment = false;
  const TrainResult r = train(cfg, data);
  const ModelGraph fresh = build_model(tiny_profile(cfg.tiny_widths),
                                       cfg.decoder, 64, 64, true, cfg.seed);
  REQUIRE(r.model.params().size() == fresh.params().size());
  for (std::size_t i = 0; i < fresh.params().size(); ++i)
    REQUIRE(r.model.params()[i].vec() == fresh.params()[i].vec());
}

TEST_CASE("evaluation reports are identical at any thread count") {
  const std::vector<Sample> data = synth_generate(12, 64, 8);
  RunConfig cfg = desk_defaults();
  cfg.epochs = 1;
  const TrainResult r = train(cfg, data);

  setenv("DNTDF_THREADS", "1", 1);
  const MetricReport one = evaluate(r.model, data);
  setenv("DNTDF_THREADS", "3", 1);
  const MetricReport three = evaluate(r.model, data);
  unsetenv("DNTDF_THREADS");
  const MetricReport dflt = evaluate(r.model, data);

  REQUIRE(one.serialize() == three.serialize());
  REQUIRE(one.serialize() == dflt.serialize());
  REQUIRE(one.pr.size() == three.pr.size());
  for (std::size_t i = 0; i < one.pr.size(); ++i) {
    REQUIRE(one.pr[i].precision == three.pr[i].precision);
    REQUIRE(one.pr[i].recall == three.pr[i].recall);
  }

  setenv("DNTDF_THREADS", "zero", 1);
  REQUIRE_THROWS_WITH(evaluate(r.model, data),
                      Catch::Matchers::ContainsSubstring("DNTDF_THREADS"));
  setenv("DNTDF_THREADS", "0", 1);
  REQUIRE_THROWS(evaluate(r.model, data));
  unsetenv("DNTDF_THREADS");

  REQUIRE_THROWS(evaluate(r.model, {}));
}

TEST_CASE("the command line wires synth, train, eval, and predict together") {
  TempDir dir("dntdf_t_cli");
  std::ostringstream out, err;

  // Usage failures exit 2 and explain themselves.
  REQUIRE(run_cli({}, out, err) == 2);
  REQUIRE(err.str().find("usage:") != std::string::npos);
  err.str("");
  REQUIRE(run_cli({"frobnicate"}, out, err) == 2);
  REQUIRE(run_cli({"synth"}, out, err) == 2);          // missing --out
  REQUIRE(run_cli({"synth", "--n"}, out, err) == 2);   // dangling value
  REQUIRE(run_cli({"synth", "--weird", "1", "--out", dir.str("x")}, out,
                  err) == 2);

  // Runtime failures exit 1.
  err.str("");
  REQUIRE(run_cli({"count", "--backbone", "nope"}, out, err) == 1);
  REQUIRE(err.str().find("error:") != std::string::npos);
  REQUIRE(run_cli({"eval", "--model", dir.str("absent.dntdf"), "--images",
                   dir.str("none"), "--masks", dir.str("none")},
                  out, err) == 1);

  // Same seed through the tool gives byte-identical datasets.
  REQUIRE(run_cli({"synth", "--n", "3", "--size", "64", "--seed", "4",
                   "--out", dir.str("a")},
                  out, err) == 0);
  REQUIRE(run_cli({"synth", "--n", "3", "--size", "64", "--seed", "4",
                   "--out", dir.str("b")},
                  out, err) == 0);
  const PnmImage ia = read_pnm(dir.str("a/images/synth-000000.ppm"));
  const PnmImage ib = read_pnm(dir.str("b/images/synth-000000.ppm"));
  REQUIRE(ia.data == ib.data);

  // Train on the saved set, then evaluate and predict against it.
  write_file(dir.str("run.cfg"),
             "backbone = tiny\nepochs = 1\n"
             "train_images = " + dir.str("a/images") + "\n"
             "train_masks = " + dir.str("a/masks") + "\n"
             "out_model = " + dir.str("m.dntdf") + "\n");
  out.str("");
  REQUIRE(run_cli({"train", "--config", dir.str("run.cfg")}, out, err) == 0);
  REQUIRE(out.str().find("epoch 1/1") != std::string::npos);
  REQUIRE(fs::exists(dir.str("m.dntdf")));

  out.str("");
  REQUIRE(run_cli({"eval", "--model", dir.str("m.dntdf"), "--images",
                   dir.str("a/images"), "--masks", dir.str("a/masks"),
                   "--report", dir.str("rep.txt")},
                  out, err) == 0);
  REQUIRE(out.str().find("f_max:") != std::string::npos);
  REQUIRE(fs::exists(dir.str("rep.txt")));
  std::ifstream pr(dir.str("rep.txt.pr.csv"));
  int lines = 0;
  for (std::string line; std::getline(pr, line);) ++lines;
  REQUIRE(lines == 257);  // header + one row per threshold

  REQUIRE(run_cli({"eval", "--model", dir.str("m.dntdf"), "--images",
                   dir.str("a/images"), "--masks", dir.str("a/masks"),
                   "--average", "weird"},
                  out, err) == 1);

  // Predictions on disk are exactly the quantized in-process forward pass.
  REQUIRE(run_cli({"predict", "--model", dir.str("m.dntdf"), "--images",
                   dir.str("a/images"), "--out", dir.str("maps")},
                  out, err) == 0);
  const ModelGraph model = load_model(dir.str("m.dntdf"));
  for (const Sample& s : load_images(dir.str("a/images"))) {
    const PnmImage saved = read_pnm(dir.str("maps/" + s.id + ".pgm"));
    REQUIRE(saved.data == tensor_to_bytes(predict(model, s.image)));
  }

  // Bad config keys surface as runtime errors with the offending name.
  write_file(dir.str("bad.cfg"), "epochz = 3\n");
  err.str("");
  REQUIRE(run_cli({"train", "--config", dir.str("bad.cfg")}, out, err) == 1);
  REQUIRE(err.str().find("epochz") != std::string::npos);

  // Complexity accounting, single build and sweep, with CSV capture.
  out.str("");
  REQUIRE(run_cli({"count", "--backbone", "tiny", "--input", "64", "--r", "2",
                   "--bins", "1,2", "--csv", dir.str("layers.csv")},
                  out, err) == 0);
  REQUIRE(out.str().find("total") != std::string::npos);
  std::ifstream csv(dir.str("layers.csv"));
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "layer,kind,component,params,flops");

  out.str("");
  REQUIRE(run_cli({"count", "--table", "2,4,8"}, out, err) == 0);
  REQUIRE(out.str().find("decoder-params") != std::string::npos);
  REQUIRE(out.str().find("5727025") != std::string::npos);
}
