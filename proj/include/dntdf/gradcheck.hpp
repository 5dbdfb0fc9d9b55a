#pragma once

// Central finite-difference gradient checking, always in double precision.
// The closure maps the input list to a scalar tensor; the reported figure is
// max_i |analytic_i - numeric_i| / max(1, |numeric_i|) over every coordinate
// of every input.

#include <vector>

#include "dntdf/tensor.hpp"

namespace dntdf {

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

template <class F>
double grad_check(F&& f, const std::vector<DTensor>& point,
                  double eps = 1e-3) {
  require(eps > 0, "grad_check: eps must be positive");

  // Analytic pass: clone the point as tracked leaves, run under a tape.
  std::vector<DTensor> tracked;
  tracked.reserve(point.size());
  for (const auto& p : point) {
    DTensor t = DTensor::from_values(p.shape(), p.vec());
    t.set_requires_grad(true);
    tracked.push_back(t);
  }
  std::vector<std::vector<double>> analytic;
  {
    DTape tape;
    DTape::Scope scope(tape);
    DTensor loss = f(tracked);
    require(loss.numel() == 1, "grad_check: closure must return a scalar");
    backward(tape, loss);
    for (const auto& t : tracked)
      analytic.push_back(t.has_grad() ? t.grad()
                                      : std::vector<double>(t.numel(), 0.0));
  }

  // Numeric pass: central differences, no tape active.
  double worst = 0.0;
  for (std::size_t which = 0; which < point.size(); ++which) {
    for (std::size_t i = 0; i < point[which].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<DTensor> probe;
        probe.reserve(point.size());
        for (std::size_t k = 0; k < point.size(); ++k) {
          std::vector<double> v = point[k].vec();
          if (k == which) v[i] += delta;
          probe.push_back(DTensor::from_values(point[k].shape(), std::move(v)));
        }
        return f(probe).vec()[0];
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
      const double err = std::abs(analytic[which][i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dntdf
