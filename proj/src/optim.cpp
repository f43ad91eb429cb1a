#include "lmdvit/optim.hpp"

#include <cmath>
#include <numbers>

#include "lmdvit/errors.hpp"

namespace lmdvit {

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::int64_t step, double lr, const AdamWOptions& o) {
  if (param.size() != m.size() || param.size() != v.size() || (!grad.empty() && grad.size() != param.size())) {
    throw DimensionError("adamw_update buffer sizes disagree");
  }
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * o.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] = param[i] * decay - lr * mhat / (std::sqrt(vhat) + o.eps);
  }
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++step_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    const auto& g = p.node()->grad;
    adamw_update(p.mutable_data(), g, m_[k], v_[k], step_, lr, options_);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double CosineSchedule::lr(std::int64_t step) const {
  if (period <= 0) return base_lr;
  const double t = static_cast<double>(step % period) / static_cast<double>(period);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace lmdvit
