#pragma once

// Training and evaluation loops. Training runs single-threaded, per-sample
// (batch size 1 by default) with Adam and a one-shot learning-rate drop;
// everything is deterministic under the run seed. Evaluation may fan out
// over samples — DNTDF_THREADS sets the worker count — and always merges
// per-image results in index order, so reports are bit-identical at any
// thread count.

#include <cmath>
#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dntdf/data.hpp"
#include "dntdf/layers.hpp"
#include "dntdf/loss.hpp"
#include "dntdf/metrics.hpp"
#include "dntdf/model.hpp"
#include "dntdf/profiles.hpp"
#include "dntdf/synth.hpp"

namespace dntdf {

struct RunConfig {
  std::string backbone = "tiny";
  std::array<int, 5> tiny_widths = {8, 16, 32, 64, 128};
  DecoderConfig decoder;
  std::uint32_t seed = 1;
  int epochs = 30;
  double lr = 1e-3;
  int lr_drop_epoch = 0;  // 0 -> round(0.8 * epochs)
  int batch_size = 1;
  bool augment = true;
  AugmentConfig aug;
  LossConfig loss;
  int input_size = 64;

  // Data plumbing for the command line: either paired directories or an
  // on-the-fly synthetic set of synth_n samples.
  std::string train_images, train_masks;
  int synth_n = 0;
  std::uint32_t data_seed = 0;  // 0 -> seed
  std::string out_model = "model.dntdf";

  int drop_epoch() const {
    return lr_drop_epoch > 0 ? lr_drop_epoch
                             : int(std::lround(0.8 * double(epochs)));
  }

  void validate() const {
    require(epochs >= 1, "run config: epochs must be >= 1, got ", epochs);
    require(batch_size >= 1, "run config: batch size must be >= 1, got ",
            batch_size);
    require(lr >= 0.0, "run config: learning rate must be >= 0");
    require(input_size >= 32 && input_size % 32 == 0,
            "run config: input size must be a positive multiple of 32, got ",
            input_size);
    aug.validate();
    loss.validate();
  }
};

// Desk-scale defaults: a small trainable encoder, halved compression, 64x64
// inputs, and a 30-epoch schedule whose drop point mirrors the 0.8 ratio of
// the full-scale recipe.
inline RunConfig desk_defaults() {
  RunConfig cfg;
  cfg.decoder.r = 2;
  cfg.decoder.bins = {1, 2};
  return cfg;
}

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0;
  double lr = 0;
};

struct TrainResult {
  ModelGraph model;
  std::vector<EpochStat> trace;
};

namespace detail {

inline BackboneProfile profile_for(const RunConfig& cfg) {
  if (cfg.backbone == "tiny") return tiny_profile(cfg.tiny_widths);
  return profile_by_name(cfg.backbone);
}

inline void check_sample_shapes(const std::vector<Sample>& data,
                                const Shape& input, const char* what) {
  for (const Sample& s : data) {
    require(s.image.shape() == input, what, ": sample '", s.id, "' image ",
            s.image.shape().str(), " does not match the model input ",
            input.str());
    const Shape ms = s.mask.shape();
    require(ms.h == input.h && ms.w == input.w, what, ": sample '", s.id,
            "' mask ", ms.str(), " does not match the model input ",
            input.str());
  }
}

}  // namespace detail

inline TrainResult train(const RunConfig& cfg, const std::vector<Sample>& data,
                         std::ostream* log = nullptr) {
  cfg.validate();
  require(!data.empty(), "train: empty dataset");

  TrainResult result{
      build_model(detail::profile_for(cfg), cfg.decoder, cfg.input_size,
                  cfg.input_size, true, cfg.seed),
      {}};
  ModelGraph& model = result.model;
  detail::check_sample_shapes(data, model.input_shape(), "train");

  Adam opt(cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0x747261696eull));  // decoupled from init draws
  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  const int n = int(data.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr_now = epoch >= cfg.drop_epoch() ? cfg.lr / 10.0 : cfg.lr;
    for (int i = n - 1; i > 0; --i)
      std::swap(order[std::size_t(i)], order[std::size_t(rng.below(i + 1))]);

    double loss_sum = 0;
    int steps = 0;
    for (int at = 0; at < n; at += cfg.batch_size) {
      Tape tape;
      Tape::Scope scope(tape);
      for (Tensor& p : model.params()) p.zero_grad();

      Tensor total;
      int in_batch = 0;
      for (int k = at; k < std::min(n, at + cfg.batch_size); ++k) {
        const Sample& base = data[std::size_t(order[std::size_t(k)])];
        const Sample s = cfg.augment ? augment(base, cfg.aug, rng) : base;
        Tensor pred = model.forward(s.image);
        Tensor l = weighted_bce(pred, s.mask, cfg.loss);
        total = in_batch == 0 ? l : add(total, l);
        ++in_batch;
      }
      Tensor loss =
          in_batch > 1 ? scalar_mul(total, 1.0f / float(in_batch)) : total;
      require(std::isfinite(loss.vec()[0]),
              "train: loss diverged (non-finite) at epoch ", epoch);
      backward(tape, loss);
      opt.step(model.params(), lr_now);
      loss_sum += double(loss.vec()[0]);
      ++steps;
    }

    result.trace.push_back({epoch, loss_sum / steps, lr_now});
    if (log)
      *log << "epoch " << epoch << "/" << cfg.epochs << " loss "
           << loss_sum / steps << " lr " << lr_now << "\n";
  }
  return result;
}

// Worker count for evaluation: DNTDF_THREADS when set (also the cap), else
// the hardware concurrency; never more than one worker per sample.
inline int eval_thread_count(int samples) {
  int t = int(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  if (const char* env = std::getenv("DNTDF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(*env != '\0' && end != nullptr && *end == '\0' && v >= 1 &&
                v <= 256,
            "DNTDF_THREADS must be a positive integer, got '", env, "'");
    t = int(v);
  }
  return std::max(1, std::min(t, samples));
}

// Tape-free forward pass; safe to call concurrently on a shared model.
inline Tensor predict(const ModelGraph& model, const Tensor& image) {
  return model.forward(image);
}

inline MetricReport evaluate(const ModelGraph& model,
                             const std::vector<Sample>& data,
                             FAverage mode = FAverage::PerImage) {
  require(!data.empty(), "evaluate: empty dataset");
  detail::check_sample_shapes(data, model.input_shape(), "evaluate");

  const int n = int(data.size());
  auto evals = std::vector<ImageEval>(std::size_t(n));
  auto run = [&](int first, int stride) {
    for (int i = first; i < n; i += stride) {
      const Sample& s = data[std::size_t(i)];
      const Tensor pred = predict(model, s.image);
      const Shape ms = s.mask.shape();
      evals[std::size_t(i)] =
          evaluate_image(pred.data(), s.mask.data(), ms.h, ms.w);
    }
  };

  const int threads = eval_thread_count(n);
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    for (int t = 0; t < threads; ++t)
      pool.emplace_back(run, t, threads);
    for (auto& th : pool) th.join();
  }

  DatasetAccumulator acc;
  for (const ImageEval& e : evals) acc.add(e);  // deterministic merge order
  return acc.report(mode);
}

}  // namespace dntdf
