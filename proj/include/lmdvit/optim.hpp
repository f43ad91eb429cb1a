#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lmdvit/tensor.hpp"

namespace lmdvit {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.02;
};

/// AdamW with decoupled weight decay (decay applied as p *= 1 - lr*wd).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions options = {});

  /// One update using each parameter's current gradient (zero if absent).
  void step(double lr);
  void zero_grad();

  [[nodiscard]] std::int64_t steps() const { return step_; }
  [[nodiscard]] const AdamWOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions options_;
  std::int64_t step_ = 0;
};

/// Single AdamW update on raw buffers; `step` is 1-based.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::int64_t step, double lr, const AdamWOptions& options);

/// Cosine annealing from `base_lr` to `min_lr` over `period` steps, restarting each period.
struct CosineSchedule {
  double base_lr = 2e-4;
  double min_lr = 1e-6;
  std::int64_t period = 2000;

  [[nodiscard]] double lr(std::int64_t step) const;
};

}  // namespace lmdvit
