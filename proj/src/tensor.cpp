#include "lmdvit/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "lmdvit/errors.hpp"

namespace lmdvit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->data, requires_grad); }

// ---------------------------------------------------------------------------

namespace {
thread_local bool t_grad_enabled = true;
thread_local bool t_nan_trap = false;
}  // namespace

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::replay() {
  // Entries are moved out first so adjoints that throw still leave an empty tape.
  auto entries = std::move(entries_);
  entries_.clear();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->adjoint(*it->out);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool nan_trap_enabled() { return t_nan_trap; }

NanTrapGuard::NanTrapGuard() : previous_(t_nan_trap) { t_nan_trap = true; }
NanTrapGuard::~NanTrapGuard() { t_nan_trap = previous_; }

MacCounter& MacCounter::current() {
  thread_local MacCounter counter;
  return counter;
}

MacCountScope::MacCountScope()
    : previous_enabled_(MacCounter::current().enabled), previous_macs_(MacCounter::current().macs) {
  MacCounter::current().enabled = true;
  MacCounter::current().macs = 0;
}

MacCountScope::~MacCountScope() {
  MacCounter::current().enabled = previous_enabled_;
  MacCounter::current().macs = previous_macs_;
}

std::uint64_t MacCountScope::macs() const { return MacCounter::current().macs; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  auto& node = *loss.node();
  node.grad.assign(1, 1.0);
  Tape::current().replay();
}

}  // namespace lmdvit
