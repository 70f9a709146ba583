#include "voxmem/adam.hpp"

#include <cmath>

namespace voxmem::ad {

AdamState::AdamState(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.beta1 > 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 > 0.0 && cfg_.beta2 < 1.0))
    throw ConfigError("adam: beta1/beta2 must lie in (0,1)");
  for (const Tensor& p : params_) {
    if (!p.defined() || !p.requires_grad())
      throw ContractError("adam: parameter without gradient buffer");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamState::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    auto data = p.mutable_values();
    auto grad = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      data[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

void AdamState::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace voxmem::ad
