#pragma once

// Brute-force reference implementations for the metric and loss tests.
// Everything here is written as directly as possible — per-threshold pixel
// scans, per-pixel window loops — and deliberately shares no code with the
// library implementations it checks.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace ref {

inline double mae(const std::vector<float>& p, const std::vector<float>& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += std::fabs(double(p[i]) - double(y[i]));
  return s / double(p.size());
}

struct PrPoint {
  double precision = 1, recall = 1;
  long long tp = 0, predicted = 0, positives = 0;
};

// One precision/recall point per threshold k/255, binarizing with strict >.
inline std::vector<PrPoint> f_curve(const std::vector<float>& p,
                                    const std::vector<float>& y) {
  std::vector<PrPoint> curve(256);
  for (int k = 0; k < 256; ++k) {
    const double t = double(k) / 255.0;
    PrPoint& pt = curve[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool pos = double(p[i]) > t;
      const bool fg = y[i] == 1.0f;
      if (pos) ++pt.predicted;
      if (fg) ++pt.positives;
      if (pos && fg) ++pt.tp;
    }
    pt.precision = pt.predicted == 0 ? 1.0 : double(pt.tp) / pt.predicted;
    pt.recall = pt.positives == 0 ? 1.0 : double(pt.tp) / pt.positives;
  }
  return curve;
}

inline double f_beta(double precision, double recall) {
  const double den = 0.3 * precision + recall;
  return den == 0.0 ? 0.0 : 1.3 * precision * recall / den;
}

inline double f_max_single(const std::vector<float>& p,
                           const std::vector<float>& y) {
  double best = 0;
  for (const PrPoint& pt : f_curve(p, y))
    best = std::max(best, f_beta(pt.precision, pt.recall));
  return best;
}

// Dataset F_max, per-image convention: mean of the per-image F curves.
inline double f_max_per_image(const std::vector<std::vector<float>>& ps,
                              const std::vector<std::vector<float>>& ys) {
  std::vector<double> fsum(256, 0);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto curve = f_curve(ps[i], ys[i]);
    for (int k = 0; k < 256; ++k)
      fsum[k] += f_beta(curve[k].precision, curve[k].recall);
  }
  double best = 0;
  for (int k = 0; k < 256; ++k) best = std::max(best, fsum[k] / ps.size());
  return best;
}

// Dataset F_max, pooled convention: counts accumulated over all images.
inline double f_max_pooled(const std::vector<std::vector<float>>& ps,
                           const std::vector<std::vector<float>>& ys) {
  double best = 0;
  for (int k = 0; k < 256; ++k) {
    long long tp = 0, predicted = 0, positives = 0;
    const double t = double(k) / 255.0;
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (std::size_t j = 0; j < ps[i].size(); ++j) {
        const bool pos = double(ps[i][j]) > t;
        const bool fg = ys[i][j] == 1.0f;
        if (pos) ++predicted;
        if (fg) ++positives;
        if (pos && fg) ++tp;
      }
    const double prec = predicted == 0 ? 1.0 : double(tp) / predicted;
    const double rec = positives == 0 ? 1.0 : double(tp) / positives;
    best = std::max(best, f_beta(prec, rec));
  }
  return best;
}

// ---- structure measure ----

inline double clean_var(const std::vector<double>& v, double mean) {
  if (v.size() <= 1) return 0;
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / double(v.size() - 1);
}

inline double object_term(const std::vector<double>& v) {
  const double eps = std::numeric_limits<double>::epsilon();
  if (v.empty()) return 0;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  const double sd = std::sqrt(clean_var(v, mean));
  return 2.0 * mean / (mean * mean + 1.0 + sd + eps);
}

inline double region_block(const std::vector<float>& p,
                           const std::vector<float>& y, int w, int i0, int i1,
                           int j0, int j1) {
  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<double> pv, yv;
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) {
      pv.push_back(double(p[std::size_t(i) * w + j]));
      yv.push_back(double(y[std::size_t(i) * w + j]));
    }
  if (pv.empty()) return 0;
  double mp = 0, my = 0;
  for (double v : pv) mp += v;
  for (double v : yv) my += v;
  mp /= double(pv.size());
  my /= double(yv.size());
  double vp = clean_var(pv, mp), vy = clean_var(yv, my), cov = 0;
  if (pv.size() > 1) {
    for (std::size_t i = 0; i < pv.size(); ++i)
      cov += (pv[i] - mp) * (yv[i] - my);
    cov /= double(pv.size() - 1);
  }
  const double a = 4.0 * mp * my * cov;
  const double b = (mp * mp + my * my) * (vp + vy);
  if (a != 0.0) return a / (b + eps);
  return b == 0.0 ? 1.0 : 0.0;
}

inline double s_measure(const std::vector<float>& p,
                        const std::vector<float>& y, int h, int w) {
  const std::size_t n = std::size_t(h) * w;
  long long fg = 0;
  double mp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] == 1.0f) ++fg;
    mp += double(p[i]);
  }
  mp /= double(n);
  if (fg == 0) return 1.0 - mp;
  if (fg == (long long)n) return mp;

  std::vector<double> fgv, bgv;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] == 1.0f)
      fgv.push_back(double(p[i]));
    else
      bgv.push_back(1.0 - double(p[i]));
  }
  const double mu = double(fg) / double(n);
  const double so = mu * object_term(fgv) + (1.0 - mu) * object_term(bgv);

  double si = 0, sj = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (y[std::size_t(i) * w + j] == 1.0f) {
        si += i + 1;
        sj += j + 1;
      }
  const int cy = int(std::floor(si / double(fg) + 0.5));
  const int cx = int(std::floor(sj / double(fg) + 0.5));
  const double area = double(n);
  const double w1 = double(cx) * cy / area;
  const double w2 = double(w - cx) * cy / area;
  const double w3 = double(cx) * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  double sr = 0;
  sr += w1 * region_block(p, y, w, 0, cy, 0, cx);
  sr += w2 * region_block(p, y, w, 0, cy, cx, w);
  sr += w3 * region_block(p, y, w, cy, h, 0, cx);
  sr += w4 * region_block(p, y, w, cy, h, cx, w);

  const double s = 0.5 * so + 0.5 * sr;
  return s < 0.0 ? 0.0 : s;
}

// ---- loss ----

inline int mirror(int t, int n) {
  if (t < 0) t = -t;
  if (t >= n) t = 2 * (n - 1) - t;
  if (t < 0) t = 0;
  if (t >= n) t = n - 1;
  return t;
}

// Per-pixel window scan; window mean computed as a double directly.
inline std::vector<double> alpha(const std::vector<float>& y, int h, int w,
                                 int delta) {
  std::vector<double> a(std::size_t(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double sum = 0;
      for (int di = -delta; di <= delta; ++di)
        for (int dj = -delta; dj <= delta; ++dj)
          sum += double(y[std::size_t(mirror(i + di, h)) * w +
                          mirror(j + dj, w)]);
      const double mean = sum / double((2 * delta + 1) * (2 * delta + 1));
      a[std::size_t(i) * w + j] =
          std::fabs(mean - double(y[std::size_t(i) * w + j]));
    }
  return a;
}

inline double weighted_bce(const std::vector<float>& p,
                           const std::vector<float>& y, int h, int w,
                           double gamma, int delta, double eps,
                           bool normalize) {
  const std::vector<double> a = alpha(y, h, w, delta);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = double(p[i]);
    if (q < eps) q = eps;
    if (q > 1.0 - eps) q = 1.0 - eps;
    const double bce = -(double(y[i]) * std::log(q) +
                         (1.0 - double(y[i])) * std::log(1.0 - q));
    const double wgt = 1.0 + gamma * a[i];
    num += wgt * bce;
    den += wgt;
  }
  return normalize ? num / den : num;
}

}  // namespace ref
