#pragma once

#include <cstdint>
#include <vector>

#include "voxmem/tensor.hpp"

namespace voxmem::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of trainable tensors.
class AdamState {
 public:
  AdamState(std::vector<Tensor> params, AdamConfig cfg = {});

  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  double learning_rate() const { return cfg_.lr; }
  void set_learning_rate(double lr) { cfg_.lr = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
};

}  // namespace voxmem::ad
