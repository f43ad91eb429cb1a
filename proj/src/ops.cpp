#include "lmdvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "lmdvit/errors.hpp"

namespace lmdvit::ops {

using NodePtr = std::shared_ptr<detail::Node>;

namespace {

constexpr std::size_t kZeroIndex = std::numeric_limits<std::size_t>::max();

// dst[c * rows + r] = src[r * cols + c]
void transpose_into(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor finish(const char* name, Shape shape, std::vector<double> data, bool record, AdjointFn adjoint) {
  if (nan_trap_enabled()) {
    for (double v : data) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by op '") + name + "'");
    }
  }
  Tensor out = Tensor::from(std::move(shape), std::move(data), record);
  if (record) Tape::current().record({name, out.node(), std::move(adjoint)});
  return out;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Maps an output flat index of a broadcast result back to an operand.
struct BroadcastIndex {
  enum class Kind { identity, modulo, table } kind = Kind::identity;
  std::size_t n = 1;
  std::vector<std::size_t> table;

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Kind::identity:
        return i;
      case Kind::modulo:
        return i % n;
      default:
        return table[i];
    }
  }
};

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

BroadcastIndex make_broadcast_index(const Shape& out, const Shape& in) {
  BroadcastIndex bi;
  const std::size_t n_in = shape_numel(in);
  const std::size_t n_out = shape_numel(out);
  if (n_in == n_out) return bi;
  // `in` (without leading ones) equal to the trailing axes of `out` tiles by modulo.
  std::size_t lead = 0;
  while (lead < in.size() && in[lead] == 1) ++lead;
  const std::size_t tail = in.size() - lead;
  bool suffix = tail <= out.size();
  for (std::size_t i = 0; suffix && i < tail; ++i) {
    suffix = in[lead + i] == out[out.size() - tail + i];
  }
  if (suffix) {
    bi.kind = BroadcastIndex::Kind::modulo;
    bi.n = n_in;
    return bi;
  }
  bi.kind = BroadcastIndex::Kind::table;
  const std::size_t r = out.size();
  const std::size_t q = in.size();
  std::vector<std::size_t> in_stride(q, 1);
  for (std::size_t j = q; j-- > 1;) in_stride[j - 1] = in_stride[j] * in[j];
  std::vector<std::size_t> stride(r, 0);
  for (std::size_t i = r - q; i < r; ++i) {
    const std::size_t j = i - (r - q);
    stride[i] = in[j] == 1 ? 0 : in_stride[j];
  }
  bi.table.resize(n_out);
  std::vector<std::size_t> idx(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n_out; ++flat) {
    bi.table[flat] = offset;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      offset += stride[d];
      if (idx[d] < out[d]) break;
      offset -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return bi;
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  Shape shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(shape);
  auto ia = make_broadcast_index(shape, a.shape());
  auto ib = make_broadcast_index(shape, b.shape());
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  if (ia.kind == BroadcastIndex::Kind::identity && ib.kind == BroadcastIndex::Kind::identity) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ia(i)], bv[ib(i)]);
  }
  const bool record = should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return finish(name, std::move(shape), std::move(out), record,
                [an, bn, ia = std::move(ia), ib = std::move(ib), da, db](const detail::Node& o) {
                  const auto& g = o.grad;
                  const std::size_t n = g.size();
                  if (an->requires_grad) {
                    auto ga = an->grad_buffer();
                    for (std::size_t i = 0; i < n; ++i) {
                      const std::size_t j = ia(i);
                      ga[j] += g[i] * da(an->data[j], bn->data[ib(i)], o.data[i]);
                    }
                  }
                  if (bn->requires_grad) {
                    auto gb = bn->grad_buffer();
                    for (std::size_t i = 0; i < n; ++i) {
                      const std::size_t j = ib(i);
                      gb[j] += g[i] * db(an->data[ia(i)], bn->data[j], o.data[i]);
                    }
                  }
                });
}

template <class Fwd, class Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(name, x.shape(), std::move(out), record, [xn, deriv](const detail::Node& o) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * deriv(xn->data[i], o.data[i]);
  });
}

Tensor gather_impl(const char* name, const Tensor& x, Shape shape, std::vector<std::size_t> index) {
  if (shape_numel(shape) != index.size()) {
    throw DimensionError(std::string(name) + ": index length " + std::to_string(index.size()) +
                         " does not match shape " + shape_str(shape));
  }
  const auto& xv = x.values();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::size_t j = index[i];
    if (j == kZeroIndex) {
      out[i] = 0.0;
    } else if (j >= xv.size()) {
      throw DimensionError(std::string(name) + ": index " + std::to_string(j) + " out of range for " +
                           shape_str(x.shape()));
    } else {
      out[i] = xv[j];
    }
  }
  const bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(name, std::move(shape), std::move(out), record,
                [xn, index = std::move(index)](const detail::Node& o) {
                  if (!xn->requires_grad) return;
                  auto gx = xn->grad_buffer();
                  for (std::size_t i = 0; i < index.size(); ++i) {
                    if (index[i] != kZeroIndex) gx[index[i]] += o.grad[i];
                  }
                });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary(
      "clamp_min", x, [lo](double v) { return v < lo ? lo : v; },
      [lo](double v, double) { return v < lo ? 0.0 : 1.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      "leaky_relu", x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  const auto& xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  NodePtr xn = x.node();
  return finish("sum", {1}, {total}, should_record({&x}), [xn](const detail::Node& o) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (auto& g : gx) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto& xv = x.values();
  const double n = static_cast<double>(xv.size());
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  NodePtr xn = x.node();
  return finish("mean", {1}, {total / n}, should_record({&x}), [xn, n](const detail::Node& o) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (auto& g : gx) g += o.grad[0] / n;
  });
}

namespace {
Tensor reduce_axis(const char* name, const Tensor& x, int axis, bool keepdim, bool average) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), a);
  Shape shape = x.shape();
  if (keepdim || shape.size() == 1) {
    shape[a] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(a));
  }
  const double factor = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  const auto& xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = &xv[(o * s.extent + e) * s.inner];
      double* dst = &out[o * s.inner];
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (average) {
    for (auto& v : out) v *= factor;
  }
  NodePtr xn = x.node();
  return finish(name, std::move(shape), std::move(out), should_record({&x}), [xn, s, factor](const detail::Node& o) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        double* dst = &gx[(oo * s.extent + e) * s.inner];
        const double* src = &o.grad[oo * s.inner];
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * factor;
      }
    }
  });
}
}  // namespace

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) { return reduce_axis("sum_axis", x, axis, keepdim, false); }

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) { return reduce_axis("mean_axis", x, axis, keepdim, true); }

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  NodePtr xn = x.node();
  return finish("reshape", std::move(shape), x.values(), should_record({&x}), [xn](const detail::Node& o) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw DimensionError("permute: axes length does not match rank of " + shape_str(in));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis list for " + shape_str(in));
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  Shape out(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    index[flat] = offset;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      offset += stride[d];
      if (idx[d] < out[d]) break;
      offset -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return gather_impl("permute", x, std::move(out), std::move(index));
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[normalize_axis(axis_a, x.rank())], axes[normalize_axis(axis_b, x.rank())]);
  return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const std::size_t a = normalize_axis(axis, parts[0].rank());
  Shape shape = parts[0].shape();
  shape[a] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == shape.size();
    for (std::size_t i = 0; ok && i < shape.size(); ++i) ok = i == a || p.shape()[i] == shape[i];
    if (!ok) {
      throw DimensionError("concat shape mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    shape[a] += p.shape()[a];
  }
  const AxisSplit s = split_at(shape, a);
  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t e = p.shape()[a];
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(&p.values()[o * e * s.inner], e * s.inner, &out[(o * s.extent + off) * s.inner]);
    }
    off += e;
  }
  bool record = false;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    record = record || should_record({&p});
    nodes.push_back(p.node());
  }
  return finish("concat", std::move(shape), std::move(out), record,
                [nodes, offsets, s](const detail::Node& o) {
                  for (std::size_t k = 0; k < nodes.size(); ++k) {
                    auto& n = *nodes[k];
                    if (!n.requires_grad) continue;
                    const std::size_t e = n.data.size() / (s.outer * s.inner);
                    auto g = n.grad_buffer();
                    for (std::size_t oo = 0; oo < s.outer; ++oo) {
                      const double* src = &o.grad[(oo * s.extent + offsets[k]) * s.inner];
                      double* dst = &g[oo * e * s.inner];
                      for (std::size_t i = 0; i < e * s.inner; ++i) dst[i] += src[i];
                    }
                  }
                });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t a = normalize_axis(axis, x.rank());
  if (length == 0 || start + length > x.shape()[a]) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(a) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), a);
  Shape shape = x.shape();
  shape[a] = length;
  std::vector<double> out(shape_numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(&x.values()[(o * s.extent + start) * s.inner], length * s.inner, &out[o * length * s.inner]);
  }
  NodePtr xn = x.node();
  return finish("slice", std::move(shape), std::move(out), should_record({&x}),
                [xn, s, start, length](const detail::Node& o) {
                  if (!xn->requires_grad) return;
                  auto g = xn->grad_buffer();
                  for (std::size_t oo = 0; oo < s.outer; ++oo) {
                    double* dst = &g[(oo * s.extent + start) * s.inner];
                    const double* src = &o.grad[oo * length * s.inner];
                    for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
                  }
                });
}

Tensor gather_flat(const Tensor& x, Shape shape, std::vector<std::size_t> index) {
  for (auto i : index) {
    if (i >= x.numel()) throw DimensionError("gather_flat: index out of range for " + shape_str(x.shape()));
  }
  return gather_impl("gather_flat", x, std::move(shape), std::move(index));
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  if (k != k2 || (!lead_b.empty() && lead_b != lead_a)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
  }
  const std::size_t batch = shape_numel(lead_a);
  const bool shared_b = lead_b.empty();
  Shape shape = lead_a;
  shape.push_back(m);
  shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t t = 0; t < batch; ++t) {
    const double* A = &av[t * m * k];
    const double* B = &bv[shared_b ? 0 : t * k * n];
    double* C = &out[t * m * n];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* brow = &B[p * n];
        double* crow = &C[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  MacCounter::current().add(batch * m * k * n);
  NodePtr an = a.node(), bn = b.node();
  return finish("matmul", std::move(shape), std::move(out), should_record({&a, &b}),
                [an, bn, batch, m, k, n, shared_b](const detail::Node& o) {
                  const auto& G = o.grad;
                  if (an->requires_grad) {
                    auto ga = an->grad_buffer();
                    std::vector<double> bt(n * k);
                    for (std::size_t t = 0; t < batch; ++t) {
                      if (t == 0 || !shared_b) transpose_into(&bn->data[shared_b ? 0 : t * k * n], k, n, bt.data());
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = &G[(t * m + i) * n];
                        double* dst = &ga[(t * m + i) * k];
                        for (std::size_t j = 0; j < n; ++j) {
                          const double g = grow[j];
                          const double* brow = &bt[j * k];
                          for (std::size_t p = 0; p < k; ++p) dst[p] += g * brow[p];
                        }
                      }
                    }
                  }
                  if (bn->requires_grad) {
                    auto gb = bn->grad_buffer();
                    for (std::size_t t = 0; t < batch; ++t) {
                      const double* A = &an->data[t * m * k];
                      double* GB = &gb[shared_b ? 0 : t * k * n];
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = &G[(t * m + i) * n];
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = A[i * k + p];
                          double* dst = &GB[p * n];
                          for (std::size_t j = 0; j < n; ++j) dst[j] += aip * grow[j];
                        }
                      }
                    }
                  }
                });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.dim(-1) != weight.dim(0)) {
    throw DimensionError("linear shape mismatch: x " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()));
  }
  const std::size_t in = weight.dim(0), outd = weight.dim(1);
  if (bias.defined() && bias.numel() != outd) {
    throw DimensionError("linear bias " + shape_str(bias.shape()) + " does not match output width " + std::to_string(outd));
  }
  const std::size_t rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = outd;
  std::vector<double> out(rows * outd);
  const auto& xv = x.values();
  const auto& wv = weight.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double* y = &out[r * outd];
    if (bias.defined()) {
      std::copy_n(bias.values().data(), outd, y);
    } else {
      std::fill_n(y, outd, 0.0);
    }
    const double* xr = &xv[r * in];
    for (std::size_t p = 0; p < in; ++p) {
      const double v = xr[p];
      const double* wr = &wv[p * outd];
      for (std::size_t j = 0; j < outd; ++j) y[j] += v * wr[j];
    }
  }
  MacCounter::current().add(rows * in * outd);
  NodePtr xn = x.node(), wn = weight.node();
  NodePtr bn = bias.defined() ? bias.node() : nullptr;
  return finish("linear", std::move(shape), std::move(out), should_record({&x, &weight, &bias}),
                [xn, wn, bn, rows, in, outd](const detail::Node& o) {
                  const auto& G = o.grad;
                  if (xn->requires_grad) {
                    auto gx = xn->grad_buffer();
                    std::vector<double> wt(outd * in);
                    transpose_into(wn->data.data(), in, outd, wt.data());
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* g = &G[r * outd];
                      double* dst = &gx[r * in];
                      for (std::size_t j = 0; j < outd; ++j) {
                        const double gj = g[j];
                        const double* wr = &wt[j * in];
                        for (std::size_t p = 0; p < in; ++p) dst[p] += gj * wr[p];
                      }
                    }
                  }
                  if (wn->requires_grad) {
                    auto gw = wn->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* g = &G[r * outd];
                      const double* xr = &xn->data[r * in];
                      for (std::size_t p = 0; p < in; ++p) {
                        const double v = xr[p];
                        double* dst = &gw[p * outd];
                        for (std::size_t j = 0; j < outd; ++j) dst[j] += v * g[j];
                      }
                    }
                  }
                  if (bn && bn->requires_grad) {
                    auto gb = bn->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < outd; ++j) gb[j] += G[r * outd + j];
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), a);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xv[base + e * s.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(xv[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  NodePtr xn = x.node();
  return finish("softmax", x.shape(), std::move(out), should_record({&x}), [xn, s](const detail::Node& o) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = oo * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) dot += o.grad[base + e * s.inner] * o.data[base + e * s.inner];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t j = base + e * s.inner;
          gx[j] += o.data[j] * (o.grad[j] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm affine params do not match width " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return finish("layer_norm", x.shape(), std::move(out), should_record({&x, &gamma, &beta}),
                [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](const detail::Node& o) {
                  const auto& G = o.grad;
                  if (gn->requires_grad || bn->requires_grad) {
                    auto gg = gn->requires_grad ? gn->grad_buffer() : std::span<double>{};
                    auto gb = bn->requires_grad ? bn->grad_buffer() : std::span<double>{};
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < d; ++j) {
                        if (!gg.empty()) gg[j] += G[r * d + j] * xhat[r * d + j];
                        if (!gb.empty()) gb[j] += G[r * d + j];
                      }
                    }
                  }
                  if (!xn->requires_grad) return;
                  auto gx = xn->grad_buffer();
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dy = 0.0, mean_dy_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dy = G[r * d + j] * gn->data[j];
                      mean_dy += dy;
                      mean_dy_xhat += dy * xhat[r * d + j];
                    }
                    mean_dy *= inv_d;
                    mean_dy_xhat *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dy = G[r * d + j] * gn->data[j];
                      gx[r * d + j] += rstd[r] * (dy - mean_dy - xhat[r * d + j] * mean_dy_xhat);
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Convolution

Tensor pad2d(const Tensor& x, Padding padding) {
  if (padding.mode == PadMode::none || padding.amount == 0) return x;
  if (x.rank() < 2) throw DimensionError("pad2d needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t H = x.dim(-2), W = x.dim(-1), p = padding.amount;
  if (padding.mode == PadMode::reflect && (p >= H || p >= W)) {
    throw DimensionError("reflect padding " + std::to_string(p) + " too large for " + shape_str(x.shape()));
  }
  const std::size_t Hp = H + 2 * p, Wp = W + 2 * p;
  const std::size_t planes = x.numel() / (H * W);
  Shape shape = x.shape();
  shape[shape.size() - 2] = Hp;
  shape[shape.size() - 1] = Wp;
  auto map = [&](std::ptrdiff_t i, std::size_t n) -> std::ptrdiff_t {
    const auto N = static_cast<std::ptrdiff_t>(n);
    if (i >= 0 && i < N) return i;
    if (padding.mode == PadMode::zero) return -1;
    return i < 0 ? -i : 2 * (N - 1) - i;
  };
  std::vector<std::size_t> index(planes * Hp * Wp);
  for (std::size_t c = 0; c < planes; ++c) {
    for (std::size_t y = 0; y < Hp; ++y) {
      const auto sy = map(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(p), H);
      for (std::size_t xx = 0; xx < Wp; ++xx) {
        const auto sx = map(static_cast<std::ptrdiff_t>(xx) - static_cast<std::ptrdiff_t>(p), W);
        index[(c * Hp + y) * Wp + xx] =
            (sy < 0 || sx < 0) ? kZeroIndex : (c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx);
      }
    }
  }
  return gather_impl("pad2d", x, std::move(shape), std::move(index));
}

Tensor conv2d(const Tensor& x_in, const Tensor& kernel, const Tensor& bias, std::size_t stride, Padding padding,
              std::size_t groups) {
  if (x_in.rank() != 3 && x_in.rank() != 4) throw DimensionError("conv2d input must be [C,H,W] or [B,C,H,W], got " + shape_str(x_in.shape()));
  if (kernel.rank() != 4) throw DimensionError("conv2d kernel must be rank 4, got " + shape_str(kernel.shape()));
  if (stride == 0 || groups == 0) throw DimensionError("conv2d stride and groups must be positive");
  const Tensor x = pad2d(x_in, padding);
  const bool batched = x.rank() == 4;
  const std::size_t B = batched ? x.dim(0) : 1;
  const std::size_t Cin = x.dim(-3), H = x.dim(-2), W = x.dim(-1);
  const std::size_t Cout = kernel.dim(0), Cg = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (Cin % groups != 0 || Cout % groups != 0 || Cg != Cin / groups) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x_in.shape()) + ", kernel " +
                         shape_str(kernel.shape()) + ", groups " + std::to_string(groups));
  }
  if (kh > H || kw > W) {
    throw DimensionError("conv2d kernel " + shape_str(kernel.shape()) + " larger than padded input " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.numel() != Cout) throw DimensionError("conv2d bias does not match output channels");
  const std::size_t Ho = (H - kh) / stride + 1, Wo = (W - kw) / stride + 1;
  const std::size_t out_per_group = Cout / groups;
  Shape shape = batched ? Shape{B, Cout, Ho, Wo} : Shape{Cout, Ho, Wo};
  std::vector<double> out(B * Cout * Ho * Wo, 0.0);
  const auto& xv = x.values();
  const auto& kv = kernel.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      double* op = &out[(b * Cout + co) * Ho * Wo];
      if (bias.defined()) std::fill_n(op, Ho * Wo, bias.values()[co]);
      const std::size_t g = co / out_per_group;
      for (std::size_t cl = 0; cl < Cg; ++cl) {
        const std::size_t ci = g * Cg + cl;
        const double* ip = &xv[(b * Cin + ci) * H * W];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = kv[((co * Cg + cl) * kh + ky) * kw + kx];
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const double* irow = &ip[(oy * stride + ky) * W + kx];
              double* orow = &op[oy * Wo];
              if (stride == 1) {
                for (std::size_t ox = 0; ox < Wo; ++ox) orow[ox] += wv * irow[ox];
              } else {
                for (std::size_t ox = 0; ox < Wo; ++ox) orow[ox] += wv * irow[ox * stride];
              }
            }
          }
        }
      }
    }
  }
  MacCounter::current().add(B * Cout * Ho * Wo * Cg * kh * kw);
  NodePtr xn = x.node(), kn = kernel.node();
  NodePtr bn = bias.defined() ? bias.node() : nullptr;
  return finish(
      "conv2d", std::move(shape), std::move(out), should_record({&x, &kernel, &bias}),
      [xn, kn, bn, B, Cin, H, W, Cout, Cg, kh, kw, Ho, Wo, stride, out_per_group](const detail::Node& o) {
        const auto& G = o.grad;
        auto gx = xn->requires_grad ? xn->grad_buffer() : std::span<double>{};
        auto gk = kn->requires_grad ? kn->grad_buffer() : std::span<double>{};
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Cout; ++co) {
            const double* gp = &G[(b * Cout + co) * Ho * Wo];
            const std::size_t g = co / out_per_group;
            for (std::size_t cl = 0; cl < Cg; ++cl) {
              const std::size_t ci = g * Cg + cl;
              const std::size_t xoff = (b * Cin + ci) * H * W;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::size_t kidx = ((co * Cg + cl) * kh + ky) * kw + kx;
                  const double wv = kn->data[kidx];
                  double acc = 0.0;
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const std::size_t row = xoff + (oy * stride + ky) * W + kx;
                    const double* grow = &gp[oy * Wo];
                    const double* irow = &xn->data[row];
                    if (!gx.empty()) {
                      double* dst = &gx[row];
                      for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox * stride] += wv * grow[ox];
                    }
                    for (std::size_t ox = 0; ox < Wo; ++ox) acc += grow[ox] * irow[ox * stride];
                  }
                  if (!gk.empty()) gk[kidx] += acc;
                }
              }
            }
          }
        }
        if (bn && bn->requires_grad) {
          auto gb = bn->grad_buffer();
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t co = 0; co < Cout; ++co) {
              const double* gp = &G[(b * Cout + co) * Ho * Wo];
              for (std::size_t i = 0; i < Ho * Wo; ++i) gb[co] += gp[i];
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  if (x.rank() != 3 || kernel.rank() != 4 || x.dim(0) != kernel.dim(0)) {
    throw DimensionError("conv_transpose2d shape mismatch: input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.shape()));
  }
  if (stride == 0) throw DimensionError("conv_transpose2d stride must be positive");
  const std::size_t Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (bias.defined() && bias.numel() != Cout) throw DimensionError("conv_transpose2d bias does not match output channels");
  const std::size_t Ho = (H - 1) * stride + kh, Wo = (W - 1) * stride + kw;
  std::vector<double> out(Cout * Ho * Wo, 0.0);
  if (bias.defined()) {
    for (std::size_t co = 0; co < Cout; ++co) std::fill_n(&out[co * Ho * Wo], Ho * Wo, bias.values()[co]);
  }
  const auto& xv = x.values();
  const auto& kv = kernel.values();
  for (std::size_t ci = 0; ci < Cin; ++ci) {
    for (std::size_t co = 0; co < Cout; ++co) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wv = kv[((ci * Cout + co) * kh + ky) * kw + kx];
          for (std::size_t iy = 0; iy < H; ++iy) {
            const double* irow = &xv[(ci * H + iy) * W];
            double* orow = &out[(co * Ho + iy * stride + ky) * Wo + kx];
            for (std::size_t ix = 0; ix < W; ++ix) orow[ix * stride] += wv * irow[ix];
          }
        }
      }
    }
  }
  MacCounter::current().add(Cin * H * W * Cout * kh * kw);
  NodePtr xn = x.node(), kn = kernel.node();
  NodePtr bn = bias.defined() ? bias.node() : nullptr;
  return finish("conv_transpose2d", {Cout, Ho, Wo}, std::move(out), should_record({&x, &kernel, &bias}),
                [xn, kn, bn, Cin, H, W, Cout, kh, kw, Ho, Wo, stride](const detail::Node& o) {
                  const auto& G = o.grad;
                  auto gx = xn->requires_grad ? xn->grad_buffer() : std::span<double>{};
                  auto gk = kn->requires_grad ? kn->grad_buffer() : std::span<double>{};
                  for (std::size_t ci = 0; ci < Cin; ++ci) {
                    for (std::size_t co = 0; co < Cout; ++co) {
                      for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                          const std::size_t kidx = ((ci * Cout + co) * kh + ky) * kw + kx;
                          const double wv = kn->data[kidx];
                          double acc = 0.0;
                          for (std::size_t iy = 0; iy < H; ++iy) {
                            const double* grow = &G[(co * Ho + iy * stride + ky) * Wo + kx];
                            const double* irow = &xn->data[(ci * H + iy) * W];
                            for (std::size_t ix = 0; ix < W; ++ix) {
                              acc += grow[ix * stride] * irow[ix];
                              if (!gx.empty()) gx[(ci * H + iy) * W + ix] += wv * grow[ix * stride];
                            }
                          }
                          if (!gk.empty()) gk[kidx] += acc;
                        }
                      }
                    }
                  }
                  if (bn && bn->requires_grad) {
                    auto gb = bn->grad_buffer();
                    for (std::size_t co = 0; co < Cout; ++co) {
                      for (std::size_t i = 0; i < Ho * Wo; ++i) gb[co] += G[co * Ho * Wo + i];
                    }
                  }
                });
}

// ---------------------------------------------------------------------------

Tensor straight_through(const Tensor& hard, const Tensor& soft) {
  if (hard.shape() != soft.shape()) {
    throw DimensionError("straight_through shape mismatch: " + shape_str(hard.shape()) + " vs " + shape_str(soft.shape()));
  }
  NodePtr sn = soft.node();
  return finish("straight_through", hard.shape(), hard.values(), should_record({&soft}), [sn](const detail::Node& o) {
    if (!sn->requires_grad) return;
    auto g = sn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

namespace {

struct Twiddle {
  std::vector<double> cos_t, sin_t;  // indexed by (k*n) mod N
  explicit Twiddle(std::size_t n) : cos_t(n), sin_t(n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      cos_t[i] = std::cos(a);
      sin_t[i] = std::sin(a);
    }
  }
};

// In-place separable 2-D DFT of one complex H x W plane; sign -1 forward, +1 inverse (unnormalized).
void dft2_plane(std::vector<double>& re, std::vector<double>& im, std::size_t H, std::size_t W, double sign,
                const Twiddle& tw_h, const Twiddle& tw_w) {
  std::vector<double> tr(std::max(H, W)), ti(std::max(H, W));
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t u = 0; u < W; ++u) {
      double sr = 0.0, si = 0.0;
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t t = (u * x) % W;
        const double c = tw_w.cos_t[t], s = sign * tw_w.sin_t[t];
        const double ar = re[y * W + x], ai = im[y * W + x];
        sr += ar * c - ai * s;
        si += ar * s + ai * c;
      }
      tr[u] = sr;
      ti[u] = si;
    }
    std::copy_n(tr.begin(), W, &re[y * W]);
    std::copy_n(ti.begin(), W, &im[y * W]);
  }
  for (std::size_t u = 0; u < W; ++u) {
    for (std::size_t v = 0; v < H; ++v) {
      double sr = 0.0, si = 0.0;
      for (std::size_t y = 0; y < H; ++y) {
        const std::size_t t = (v * y) % H;
        const double c = tw_h.cos_t[t], s = sign * tw_h.sin_t[t];
        const double ar = re[y * W + u], ai = im[y * W + u];
        sr += ar * c - ai * s;
        si += ar * s + ai * c;
      }
      tr[v] = sr;
      ti[v] = si;
    }
    for (std::size_t v = 0; v < H; ++v) {
      re[v * W + u] = tr[v];
      im[v * W + u] = ti[v];
    }
  }
}

}  // namespace

ComplexPlanes fft2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("fft2 needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t H = x.dim(-2), W = x.dim(-1);
  const std::size_t planes = x.numel() / (H * W);
  const std::size_t n = x.numel();
  Twiddle tw_h(H), tw_w(W);
  std::vector<double> out(2 * n);
  std::vector<double> re(H * W), im(H * W);
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(&x.values()[p * H * W], H * W, re.begin());
    std::fill(im.begin(), im.end(), 0.0);
    dft2_plane(re, im, H, W, -1.0, tw_h, tw_w);
    std::copy(re.begin(), re.end(), &out[p * H * W]);
    std::copy(im.begin(), im.end(), &out[n + p * H * W]);
  }
  Shape shape = x.shape();
  shape.insert(shape.begin(), 2);
  NodePtr xn = x.node();
  Tensor both = finish("fft2", std::move(shape), std::move(out), should_record({&x}),
                       [xn, H, W, planes, n](const detail::Node& o) {
                         if (!xn->requires_grad) return;
                         Twiddle th(H), twd(W);
                         auto gx = xn->grad_buffer();
                         std::vector<double> re(H * W), im(H * W);
                         for (std::size_t p = 0; p < planes; ++p) {
                           std::copy_n(&o.grad[p * H * W], H * W, re.begin());
                           std::copy_n(&o.grad[n + p * H * W], H * W, im.begin());
                           dft2_plane(re, im, H, W, +1.0, th, twd);
                           for (std::size_t i = 0; i < H * W; ++i) gx[p * H * W + i] += re[i];
                         }
                       });
  Shape plane_shape = x.shape();
  return {reshape(slice(both, 0, 0, 1), plane_shape), reshape(slice(both, 0, 1, 1), plane_shape)};
}

}  // namespace lmdvit::ops
