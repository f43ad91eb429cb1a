#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to shared storage. Operations (see ops.hpp)
// record an adjoint closure on the calling thread's tape whenever gradient
// recording is enabled and at least one input requires a gradient;
// backward() replays that tape in reverse and clears it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lmdvit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until an adjoint reaches this node
  bool requires_grad = false;

  std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  /// Extent of axis `axis`; negative values count from the back.
  [[nodiscard]] std::size_t dim(int axis) const;
  [[nodiscard]] std::size_t numel() const { return node_->data.size(); }

  [[nodiscard]] std::span<const double> data() const { return node_->data; }
  /// Mutable access for leaves (parameter updates, test perturbations).
  [[nodiscard]] std::span<double> mutable_data() { return node_->data; }
  [[nodiscard]] const std::vector<double>& values() const { return node_->data; }
  [[nodiscard]] double item() const;
  [[nodiscard]] double at(std::size_t flat) const { return node_->data[flat]; }

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros when no adjoint has reached this tensor.
  [[nodiscard]] std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the values with no graph attachment.
  [[nodiscard]] Tensor detach() const;
  [[nodiscard]] Tensor clone(bool requires_grad) const;

  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Tape control

/// Adjoint closure: reads the output node's gradient and accumulates into inputs.
using AdjointFn = std::function<void(const detail::Node& out)>;

struct TapeEntry {
  const char* op;
  std::shared_ptr<detail::Node> out;
  AdjointFn adjoint;
};

/// Per-thread operation record.
class Tape {
 public:
  static Tape& current();

  void record(TapeEntry entry) { entries_.push_back(std::move(entry)); }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }
  void replay();

 private:
  std::vector<TapeEntry> entries_;
};

[[nodiscard]] bool grad_enabled();

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// While active, every op checks its output and throws NumericError naming
/// the first op that produced a NaN or Inf.
class NanTrapGuard {
 public:
  NanTrapGuard();
  ~NanTrapGuard();
  NanTrapGuard(const NanTrapGuard&) = delete;
  NanTrapGuard& operator=(const NanTrapGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool nan_trap_enabled();

/// Multiply-accumulate counter for matmul/linear/convolution ops on this thread.
struct MacCounter {
  std::uint64_t macs = 0;
  bool enabled = false;

  static MacCounter& current();
  void add(std::uint64_t n) {
    if (enabled) macs += n;
  }
};

/// Enables and resets the thread's MAC counter for its lifetime.
class MacCountScope {
 public:
  MacCountScope();
  ~MacCountScope();
  MacCountScope(const MacCountScope&) = delete;
  MacCountScope& operator=(const MacCountScope&) = delete;
  [[nodiscard]] std::uint64_t macs() const;

 private:
  bool previous_enabled_;
  std::uint64_t previous_macs_;
};

/// Seeds the loss gradient with 1, replays the tape in reverse, clears it.
/// Throws UsageError when `loss` is not a single-element tensor.
void backward(const Tensor& loss);

}  // namespace lmdvit
