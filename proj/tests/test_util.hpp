#pragma once

// Shared oracles for the unit and acceptance suites. Everything here is
// deliberately independent of the implementation paths it checks: finite
// differences for gradients, exhaustive scans for retrieval, O(n^2) nearest
// neighbors for surface scores.

#include <cmath>
#include <functional>
#include <vector>

#include "voxmem/rng.hpp"
#include "voxmem/tensor.hpp"

namespace voxmem::testutil {

// Max elementwise gradient error of a scalar-valued forward pass against
// central finite differences. The error metric is
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// so it is relative for large gradients with an absolute floor for small
// ones. `forward` must be a pure function of the leaf tensors.
inline double max_grad_error(const std::function<ad::Tensor()>& forward,
                             std::vector<ad::Tensor> leaves, double h = 1e-5) {
  std::vector<std::vector<double>> analytic;
  {
    ad::Tape tape;
    for (ad::Tensor& leaf : leaves) leaf.zero_grad();
    ad::Tensor loss = forward();
    tape.backward(loss);
    for (ad::Tensor& leaf : leaves) {
      auto g = leaf.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto data = leaves[li].mutable_values();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = forward().value();
      data[i] = saved - h;
      const double down = forward().value();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[li][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Uniform values avoiding a dead zone around the listed kink points, so
// finite differences of piecewise ops stay well-posed.
inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi,
                                         const std::vector<double>& kinks = {},
                                         double margin = 2e-2) {
  std::vector<double> out(n);
  for (double& v : out) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      v = rng.uniform(lo, hi);
      bool clear = true;
      for (double k : kinks)
        if (std::abs(v - k) < margin) clear = false;
      if (clear) break;
    }
  }
  return out;
}

}  // namespace voxmem::testutil
