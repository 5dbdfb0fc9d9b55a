#pragma once

// Saliency evaluation metrics: maximum F-measure over 256 binarization
// thresholds, mean absolute error, and the structure measure (object- plus
// region-aware similarity). All scoring is done in double precision with a
// deterministic accumulation order so reports are bit-stable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dntdf/tensor.hpp"

namespace dntdf {

inline constexpr int kFThresholds = 256;
inline constexpr double kFBetaSq = 0.3;

// Thresholds k/255 for k = 0..255; binarization is strict (value > t).
inline const std::array<double, kFThresholds>& f_thresholds() {
  static const std::array<double, kFThresholds> t = [] {
    std::array<double, kFThresholds> a{};
    for (int k = 0; k < kFThresholds; ++k) a[k] = double(k) / 255.0;
    return a;
  }();
  return t;
}

struct PrSample {
  double threshold = 0, precision = 0, recall = 0;
};

// Dataset-level F aggregation: PerImage averages each image's F curve before
// taking the max; Pooled accumulates TP/FP/FN over the whole set first.
enum class FAverage { PerImage, Pooled };

inline const char* f_average_name(FAverage m) {
  return m == FAverage::PerImage ? "per-image" : "pooled";
}

struct MetricReport {
  int images = 0;
  FAverage f_average = FAverage::PerImage;
  double f_max = 0, mae = 0, s_measure = 0;
  std::vector<PrSample> pr;  // one sample per threshold

  std::string serialize() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "images: " << images << "\n";
    os << "f_average: " << f_average_name(f_average) << "\n";
    os << "f_max: " << f_max << "\n";
    os << "mae: " << mae << "\n";
    os << "s_measure: " << s_measure << "\n";
    return os.str();
  }

  std::string pr_csv() const {
    std::ostringstream os;
    os << "threshold,precision,recall\n";
    os << std::fixed << std::setprecision(9);
    for (const PrSample& s : pr)
      os << s.threshold << "," << s.precision << "," << s.recall << "\n";
    return os.str();
  }
};

namespace detail {

inline double f_beta(double precision, double recall) {
  const double den = kFBetaSq * precision + recall;
  return den == 0.0 ? 0.0 : (1.0 + kFBetaSq) * precision * recall / den;
}

inline void check_pair(const float* p, const float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    require(p[i] >= 0.0f && p[i] <= 1.0f,
            "metrics: prediction value out of [0,1]: ", double(p[i]));
    require(y[i] == 0.0f || y[i] == 1.0f,
            "metrics: ground truth must be binary, found ", double(y[i]));
  }
}

}  // namespace detail

// Integer threshold statistics for one image. predicted[k] and tp[k] count
// pixels passing threshold k overall and within the ground-truth foreground.
struct ImageFStats {
  std::array<std::int64_t, kFThresholds> tp{}, predicted{};
  std::int64_t positives = 0;
  std::int64_t pixels = 0;

  double precision(int k) const {  // := 1 when nothing is predicted positive
    return predicted[k] == 0 ? 1.0 : double(tp[k]) / double(predicted[k]);
  }
  double recall(int k) const {  // := 1 when the mask has no foreground
    return positives == 0 ? 1.0 : double(tp[k]) / double(positives);
  }
};

inline ImageFStats image_f_stats(const float* p, const float* y,
                                 std::size_t n) {
  detail::check_pair(p, y, n);
  const auto& th = f_thresholds();
  // Pixel with value v passes exactly the thresholds strictly below v; that
  // count is v's lower-bound index in the sorted threshold grid.
  std::array<std::int64_t, kFThresholds + 1> cnt_all{}, cnt_fg{};
  ImageFStats st;
  st.pixels = std::int64_t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = double(p[i]);
    const int m = int(std::lower_bound(th.begin(), th.end(), v) - th.begin());
    ++cnt_all[m];
    if (y[i] == 1.0f) {
      ++cnt_fg[m];
      ++st.positives;
    }
  }
  std::int64_t run_all = 0, run_fg = 0;
  for (int k = kFThresholds; k-- > 0;) {
    run_all += cnt_all[k + 1];
    run_fg += cnt_fg[k + 1];
    st.predicted[k] = run_all;
    st.tp[k] = run_fg;
  }
  return st;
}

inline double mae(const float* p, const float* y, std::size_t n) {
  detail::check_pair(p, y, n);
  require(n > 0, "mae: empty image");
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(double(p[i]) - double(y[i]));
  return s / double(n);
}

// Single-image maximum F over the threshold grid (both dataset modes reduce
// to this when the set has one image).
inline double f_measure_max(const float* p, const float* y, std::size_t n) {
  const ImageFStats st = image_f_stats(p, y, n);
  double best = 0;
  for (int k = 0; k < kFThresholds; ++k)
    best = std::max(best, detail::f_beta(st.precision(k), st.recall(k)));
  return best;
}

namespace detail {

// Sample moments matching the reference structure-measure arithmetic:
// dispersion terms divide by (n - 1 + eps), so one-element sets give 0.
struct BlockMoments {
  double mean_p = 0, mean_y = 0, var_p = 0, var_y = 0, cov = 0;
  std::int64_t n = 0;
};

inline BlockMoments block_moments(const float* p, const float* y, int w,
                                  int i0, int i1, int j0, int j1) {
  BlockMoments m;
  m.n = std::int64_t(i1 - i0) * (j1 - j0);
  if (m.n == 0) return m;
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) {
      m.mean_p += double(p[std::size_t(i) * w + j]);
      m.mean_y += double(y[std::size_t(i) * w + j]);
    }
  m.mean_p /= double(m.n);
  m.mean_y /= double(m.n);
  const double den = double(m.n) - 1.0 + std::numeric_limits<double>::epsilon();
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) {
      const double dp = double(p[std::size_t(i) * w + j]) - m.mean_p;
      const double dy = double(y[std::size_t(i) * w + j]) - m.mean_y;
      m.var_p += dp * dp;
      m.var_y += dy * dy;
      m.cov += dp * dy;
    }
  m.var_p /= den;
  m.var_y /= den;
  m.cov /= den;
  return m;
}

inline double block_similarity(const BlockMoments& m) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double a = 4.0 * m.mean_p * m.mean_y * m.cov;
  const double b =
      (m.mean_p * m.mean_p + m.mean_y * m.mean_y) * (m.var_p + m.var_y);
  if (a != 0.0) return a / (b + eps);
  return b == 0.0 ? 1.0 : 0.0;
}

// Similarity of one object region: values x are the prediction restricted to
// the region (foreground) or its complement probabilities (background).
inline double object_score(const std::vector<double>& x) {
  const double eps = std::numeric_limits<double>::epsilon();
  if (x.empty()) return 0.0;
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double ss = 0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd =
      std::sqrt(ss / (double(x.size()) - 1.0 + eps));
  return 2.0 * mean / (mean * mean + 1.0 + sd + eps);
}

}  // namespace detail

// Structure measure: 0.5 * object similarity + 0.5 * region similarity.
// Degenerate masks use the reference conventions: an all-background mask
// scores 1 - mean(P); an all-foreground mask scores mean(P).
inline double s_measure(const float* p, const float* y, int h, int w) {
  require(h > 0 && w > 0, "s_measure: empty image");
  const std::size_t n = std::size_t(h) * w;
  detail::check_pair(p, y, n);

  std::int64_t fg = 0;
  double mean_p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fg += y[i] == 1.0f ? 1 : 0;
    mean_p += double(p[i]);
  }
  mean_p /= double(n);
  if (fg == 0) return 1.0 - mean_p;
  if (fg == std::int64_t(n)) return mean_p;

  // Object term: foreground uses P where Y=1, background uses 1-P where Y=0.
  std::vector<double> fg_vals, bg_vals;
  fg_vals.reserve(std::size_t(fg));
  bg_vals.reserve(n - std::size_t(fg));
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] == 1.0f)
      fg_vals.push_back(double(p[i]));
    else
      bg_vals.push_back(1.0 - double(p[i]));
  }
  const double mu = double(fg) / double(n);
  const double s_object = mu * detail::object_score(fg_vals) +
                          (1.0 - mu) * detail::object_score(bg_vals);

  // Region term: split both maps into four blocks at the mask centroid
  // (1-based, rounded half up) and area-weight the per-block similarities.
  double sum_i = 0, sum_j = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (y[std::size_t(i) * w + j] == 1.0f) {
        sum_i += double(i + 1);
        sum_j += double(j + 1);
      }
  const int cy = int(std::floor(sum_i / double(fg) + 0.5));
  const int cx = int(std::floor(sum_j / double(fg) + 0.5));
  const double area = double(n);
  const double w1 = double(cx) * cy / area;
  const double w2 = double(w - cx) * cy / area;
  const double w3 = double(cx) * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double q1 =
      detail::block_similarity(detail::block_moments(p, y, w, 0, cy, 0, cx));
  const double q2 =
      detail::block_similarity(detail::block_moments(p, y, w, 0, cy, cx, w));
  const double q3 =
      detail::block_similarity(detail::block_moments(p, y, w, cy, h, 0, cx));
  const double q4 =
      detail::block_similarity(detail::block_moments(p, y, w, cy, h, cx, w));
  // Empty blocks carry zero area weight; skip them so they contribute 0.
  double s_region = 0;
  if (cx > 0 && cy > 0) s_region += w1 * q1;
  if (cx < w && cy > 0) s_region += w2 * q2;
  if (cx > 0 && cy < h) s_region += w3 * q3;
  if (cx < w && cy < h) s_region += w4 * q4;

  const double s = 0.5 * s_object + 0.5 * s_region;
  return s < 0.0 ? 0.0 : s;
}

// Per-image evaluation record; pure and order-independent, so a parallel
// evaluator can compute these and feed them to the accumulator in index
// order for bit-identical reports.
struct ImageEval {
  ImageFStats f;
  double mae = 0, s = 0;
};

inline ImageEval evaluate_image(const float* p, const float* y, int h, int w) {
  ImageEval e;
  const std::size_t n = std::size_t(h) * w;
  e.f = image_f_stats(p, y, n);
  e.mae = mae(p, y, n);
  e.s = s_measure(p, y, h, w);
  return e;
}

// Aggregates per-image evaluations into a MetricReport. Both F conventions
// are tracked: per-image (mean of per-image F curves, the default) and
// pooled (counts accumulated over the set before precision/recall).
class DatasetAccumulator {
 public:
  void add(const ImageEval& e) {
    ++images_;
    for (int k = 0; k < kFThresholds; ++k) {
      const double prec = e.f.precision(k), rec = e.f.recall(k);
      prec_sum_[k] += prec;
      rec_sum_[k] += rec;
      f_sum_[k] += detail::f_beta(prec, rec);
      tp_[k] += e.f.tp[k];
      predicted_[k] += e.f.predicted[k];
    }
    positives_ += e.f.positives;
    mae_sum_ += e.mae;
    s_sum_ += e.s;
  }

  void add(const float* p, const float* y, int h, int w) {
    add(evaluate_image(p, y, h, w));
  }

  int images() const { return images_; }

  MetricReport report(FAverage mode = FAverage::PerImage) const {
    require(images_ > 0, "metrics: no images accumulated");
    MetricReport r;
    r.images = images_;
    r.f_average = mode;
    r.mae = mae_sum_ / images_;
    r.s_measure = s_sum_ / images_;
    r.pr.resize(kFThresholds);
    for (int k = 0; k < kFThresholds; ++k) {
      double prec, rec, f;
      if (mode == FAverage::PerImage) {
        prec = prec_sum_[k] / images_;
        rec = rec_sum_[k] / images_;
        f = f_sum_[k] / images_;
      } else {
        prec = predicted_[k] == 0 ? 1.0
                                  : double(tp_[k]) / double(predicted_[k]);
        rec = positives_ == 0 ? 1.0 : double(tp_[k]) / double(positives_);
        f = detail::f_beta(prec, rec);
      }
      r.pr[k] = {f_thresholds()[k], prec, rec};
      r.f_max = std::max(r.f_max, f);
    }
    return r;
  }

 private:
  int images_ = 0;
  std::array<double, kFThresholds> prec_sum_{}, rec_sum_{}, f_sum_{};
  std::array<std::int64_t, kFThresholds> tp_{}, predicted_{};
  std::int64_t positives_ = 0;
  double mae_sum_ = 0, s_sum_ = 0;
};

}  // namespace dntdf
