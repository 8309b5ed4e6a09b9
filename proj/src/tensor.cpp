#include "daf/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "daf/error.hpp"

namespace daf {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = {};
  impl_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor make_result(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>(*impl_);
  return Tensor(std::move(impl));
}

Tensor Tensor::detach() const { return make_result(impl_->shape, impl_->data); }

// ---------------------------------------------------------------------------
// Mask

Mask::Mask(Shape s, std::vector<std::uint8_t> values) : shape(std::move(s)), on(std::move(values)) {
  if (shape_size(shape) != on.size()) throw DimensionError("mask shape does not match its values");
}

Mask Mask::all(Shape s) {
  const auto n = shape_size(s);
  return Mask(std::move(s), std::vector<std::uint8_t>(n, 1));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(on.begin(), on.end(), [](auto v) { return v != 0; }));
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local ReluKinkMonitor* g_kink_monitor = nullptr;

struct GradFault {
  std::string op;
  double factor = 1.0;
  bool on = false;
};
thread_local GradFault g_fault;
}  // namespace

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  const auto& target = loss.impl();
  std::size_t end = entries_.size();
  while (end > 0 && entries_[end - 1].output != target) --end;
  if (end == 0) throw Error("backward: loss was not produced on this tape");

  for (auto& e : entries_) {
    e.output->grad.assign(e.output->data.size(), 0.0);
    for (auto& in : e.inputs) {
      if (in->requires_grad) in->grad.assign(in->data.size(), 0.0);
    }
  }
  target->grad[0] = 1.0;

  for (std::size_t i = end; i-- > 0;) {
    auto& e = entries_[i];
    if (g_fault.on && e.op == g_fault.op) {
      std::vector<double> saved = e.output->grad;
      for (double& g : e.output->grad) g *= g_fault.factor;
      e.backward();
      e.output->grad = std::move(saved);
    } else {
      e.backward();
    }
  }
}

ScopedGradFault::ScopedGradFault(std::string op, double factor) {
  g_fault = GradFault{std::move(op), factor, true};
}
ScopedGradFault::~ScopedGradFault() { g_fault = GradFault{}; }

ReluKinkMonitor::ReluKinkMonitor() : previous_(g_kink_monitor) { g_kink_monitor = this; }
ReluKinkMonitor::~ReluKinkMonitor() { g_kink_monitor = previous_; }
ReluKinkMonitor* ReluKinkMonitor::active() { return g_kink_monitor; }

void ReluKinkMonitor::observe(std::span<const double> input) {
  for (double v : input) {
    hash_ ^= (v > 0.0) ? 0x9eU : 0x3bU;
    hash_ *= 1099511628211ULL;
  }
}

// ---------------------------------------------------------------------------
// Operation plumbing

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Records `out` on the active tape when some input needs a gradient. The
// backward functor receives the output impl and the input impls in order.
template <typename Fn>
Tensor finish(std::string_view op, Tensor out, std::initializer_list<const Tensor*> inputs, Fn&& fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr || !any_requires_grad(inputs)) return out;
  out.set_requires_grad(true);
  Tape::Entry entry;
  entry.op = op;
  entry.output = out.impl();
  for (const Tensor* t : inputs) entry.inputs.push_back(t->impl());
  entry.backward = [o = out.impl(), ins = entry.inputs, fn = std::forward<Fn>(fn)]() { fn(*o, ins); };
  tape->record(std::move(entry));
  return out;
}

Tensor finish_list(std::string_view op, Tensor out, const std::vector<Tensor>& inputs,
                   std::function<void(const TensorImpl&, const std::vector<ImplPtr>&)> fn) {
  Tape* tape = Tape::active();
  const bool need = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tape == nullptr || !need) return out;
  out.set_requires_grad(true);
  Tape::Entry entry;
  entry.op = op;
  entry.output = out.impl();
  for (const Tensor& t : inputs) entry.inputs.push_back(t.impl());
  entry.backward = [o = out.impl(), ins = entry.inputs, fn = std::move(fn)]() { fn(*o, ins); };
  tape->record(std::move(entry));
  return out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

std::size_t last_dim(const Tensor& t, const char* what) {
  if (t.rank() == 0) throw DimensionError(std::string(what) + ": scalar input has no last axis");
  return t.shape().back();
}

template <typename F, typename D>
Tensor unary(std::string_view op, const Tensor& x, F f, D deriv_from_out_and_in) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  Tensor result = make_result(x.shape(), std::move(out));
  return finish(op, result, {&x}, [deriv_from_out_and_in](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    auto& xi = *in[0];
    if (!xi.requires_grad) return;
    for (std::size_t i = 0; i < o.data.size(); ++i) {
      xi.grad[i] += o.grad[i] * deriv_from_out_and_in(o.data[i], xi.data[i]);
    }
  });
}

enum class Bin { kAdd, kSub, kMul };

Tensor binary(std::string_view op, Bin kind, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Shape out_shape = same ? a.shape() : (a_scalar && !b_scalar ? b.shape() : a.shape());
  const std::size_t n = shape_size(out_shape);
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t as = (a.size() == n) ? 1 : 0;
  const std::size_t bs = (b.size() == n) ? 1 : 0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[i * as];
    const double y = bd[i * bs];
    out[i] = kind == Bin::kAdd ? x + y : kind == Bin::kSub ? x - y : x * y;
  }
  return finish(op, make_result(out_shape, std::move(out)), {&a, &b},
                [kind, as, bs](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& ai = *in[0];
                  auto& bi = *in[1];
                  for (std::size_t i = 0; i < o.data.size(); ++i) {
                    const double g = o.grad[i];
                    if (ai.requires_grad) ai.grad[i * as] += kind == Bin::kMul ? g * bi.data[i * bs] : g;
                    if (bi.requires_grad) {
                      bi.grad[i * bs] += kind == Bin::kMul ? g * ai.data[i * as] : kind == Bin::kSub ? -g : g;
                    }
                  }
                });
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  return finish("matmul", make_result({m, n}, std::move(out)), {&a, &b},
                [m, k, n](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  ConstMapMat g(o.grad.data(), m, n);
                  auto& ai = *in[0];
                  auto& bi = *in[1];
                  if (ai.requires_grad) {
                    MapMat(ai.grad.data(), m, k).noalias() += g * ConstMapMat(bi.data.data(), k, n).transpose();
                  }
                  if (bi.requires_grad) {
                    MapMat(bi.grad.data(), k, n).noalias() += ConstMapMat(ai.data.data(), m, k).transpose() * g;
                  }
                });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(w, 2, "affine weight");
  const std::size_t out_w = w.dim(0), in_w = w.dim(1);
  const std::size_t in = last_dim(x, "affine");
  if (in != in_w) {
    throw DimensionError("affine: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const bool has_bias = bias.rank() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_w)) {
    throw DimensionError("affine: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_w;
  std::vector<double> out(rows * out_w);
  MapMat y(out.data(), rows, out_w);
  y.noalias() = ConstMapMat(x.data().data(), rows, in) * ConstMapMat(w.data().data(), out_w, in).transpose();
  if (has_bias) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), out_w);
  }
  auto backward = [rows, in, out_w, has_bias](const TensorImpl& o, const std::vector<ImplPtr>& ins) {
    ConstMapMat g(o.grad.data(), rows, out_w);
    auto& xi = *ins[0];
    auto& wi = *ins[1];
    if (xi.requires_grad) {
      MapMat(xi.grad.data(), rows, in).noalias() += g * ConstMapMat(wi.data.data(), out_w, in);
    }
    if (wi.requires_grad) {
      MapMat(wi.grad.data(), out_w, in).noalias() += g.transpose() * ConstMapMat(xi.data.data(), rows, in);
    }
    if (has_bias && ins[2]->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(ins[2]->grad.data(), out_w) += g.colwise().sum();
    }
  };
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (has_bias) return finish("affine", result, {&x, &w, &bias}, backward);
  return finish("affine", result, {&x, &w}, backward);
}

Tensor affine(const Tensor& x, const Tensor& w) {
  static const Tensor no_bias;
  return affine(x, w, no_bias);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Bin::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Bin::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Bin::kMul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; },
               [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  if (auto* mon = ReluKinkMonitor::active()) mon->observe(x.data());
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double, double in) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double out, double) { return 1.0 - out * out; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x,
               [](double v) {
                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double out, double) { return out * (1.0 - out); });
}

// ---------------------------------------------------------------------------
// Softmax

namespace {
Tensor softmax_impl(const Tensor& x, const Mask* mask) {
  const std::size_t n = last_dim(x, "softmax");
  if (n == 0) throw DimensionError("softmax over an empty axis");
  if (mask != nullptr && mask->shape != x.shape()) {
    throw DimensionError("softmax: mask " + shape_str(mask->shape) + " does not match input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  const auto xd = x.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[base + j]) continue;
      mx = std::max(mx, xd[base + j]);
      any = true;
    }
    if (!any) throw NumericError("softmax: row " + std::to_string(r) + " has every position masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[base + j]) continue;
      out[base + j] = std::exp(xd[base + j] - mx);
      total += out[base + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= total;
  }
  return finish("softmax", make_result(x.shape(), std::move(out)), {&x},
                [rows, n](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& xi = *in[0];
                  if (!xi.requires_grad) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t base = r * n;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += o.data[base + j] * o.grad[base + j];
                    for (std::size_t j = 0; j < n; ++j) {
                      xi.grad[base + j] += o.data[base + j] * (o.grad[base + j] - dot);
                    }
                  }
                });
}
}  // namespace

Tensor softmax(const Tensor& x) { return softmax_impl(x, nullptr); }
Tensor softmax(const Tensor& x, const Mask& mask) { return softmax_impl(x, &mask); }

// ---------------------------------------------------------------------------
// Layout

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: extents of " + shape_str(s) + " disagree with " + shape_str(ref));
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const auto sp = split_axis(out_shape, axis);
  std::vector<double> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.shape()[axis] * sp.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * sp.inner + off));
    }
    off += chunk;
  }
  return finish_list("concat", make_result(out_shape, std::move(out)), parts,
                     [sp, total, offsets, axis](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                       const std::size_t row = total * sp.inner;
                       for (std::size_t p = 0; p < in.size(); ++p) {
                         auto& pi = *in[p];
                         if (!pi.requires_grad) continue;
                         const std::size_t chunk = pi.shape[axis] * sp.inner;
                         for (std::size_t r = 0; r < sp.outer; ++r) {
                           for (std::size_t j = 0; j < chunk; ++j) {
                             pi.grad[r * chunk + j] += o.grad[r * row + offsets[p] + j];
                           }
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish("reshape", make_result(std::move(shape), std::move(out)), {&x},
                [](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& xi = *in[0];
                  if (!xi.requires_grad) return;
                  for (std::size_t i = 0; i < o.grad.size(); ++i) xi.grad[i] += o.grad[i];
                });
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("stack of zero tensors");
  if (axis > parts.front().rank()) throw DimensionError("stack axis out of range");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank()) throw DimensionError("slice axis out of range for " + shape_str(x.shape()));
  if (begin >= end || end > x.shape()[axis]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()));
  }
  const auto sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * sp.inner;
  const std::size_t row = sp.extent * sp.inner;
  const std::size_t start = begin * sp.inner;
  std::vector<double> out(sp.outer * chunk);
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(o * row + start), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  return finish("slice", make_result(std::move(out_shape), std::move(out)), {&x},
                [sp, chunk, row, start](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& xi = *in[0];
                  if (!xi.requires_grad) return;
                  for (std::size_t r = 0; r < sp.outer; ++r) {
                    for (std::size_t j = 0; j < chunk; ++j) xi.grad[r * row + start + j] += o.grad[r * chunk + j];
                  }
                });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("sum of empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish("sum", make_result({}, {s}), {&x}, [](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    auto& xi = *in[0];
    if (!xi.requires_grad) return;
    for (double& g : xi.grad) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("reduce axis out of range for " + shape_str(x.shape()));
  const auto sp = split_axis(x.shape(), axis);
  if (sp.extent == 0) throw DimensionError("reduce over empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        out[o * sp.inner + i] += xd[(o * sp.extent + e) * sp.inner + i];
      }
    }
  }
  return finish("sum_axis", make_result(std::move(out_shape), std::move(out)), {&x},
                [sp](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& xi = *in[0];
                  if (!xi.requires_grad) return;
                  for (std::size_t r = 0; r < sp.outer; ++r) {
                    for (std::size_t e = 0; e < sp.extent; ++e) {
                      for (std::size_t i = 0; i < sp.inner; ++i) {
                        xi.grad[(r * sp.extent + e) * sp.inner + i] += o.grad[r * sp.inner + i];
                      }
                    }
                  }
                });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("reduce axis out of range for " + shape_str(x.shape()));
  if (x.shape()[axis] == 0) throw DimensionError("reduce over empty axis");
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.shape()[axis]));
}

// ---------------------------------------------------------------------------
// Row and sequence helpers

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  const std::size_t d = last_dim(x, "scale_rows");
  const std::size_t rows = d ? x.size() / d : 0;
  if (w.size() != rows) {
    throw DimensionError("scale_rows: " + shape_str(w.shape()) + " weights for " + shape_str(x.shape()));
  }
  std::vector<double> out(x.size());
  const auto xd = x.data();
  const auto wd = w.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = wd[r] * xd[r * d + j];
  }
  return finish("scale_rows", make_result(x.shape(), std::move(out)), {&x, &w},
                [rows, d](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& xi = *in[0];
                  auto& wi = *in[1];
                  for (std::size_t r = 0; r < rows; ++r) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double g = o.grad[r * d + j];
                      if (xi.requires_grad) xi.grad[r * d + j] += g * wi.data[r];
                      acc += g * xi.data[r * d + j];
                    }
                    if (wi.requires_grad) wi.grad[r] += acc;
                  }
                });
}

Tensor select_rows(const Mask& keep, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("select_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t d = last_dim(a, "select_rows");
  const std::size_t rows = d ? a.size() / d : 0;
  if (keep.size() != rows) throw DimensionError("select_rows: mask length does not match row count");
  std::vector<double> out(a.size());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = keep[r] ? ad : bd;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return finish("select_rows", make_result(a.shape(), std::move(out)), {&a, &b},
                [keep, rows, d](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    auto& dst = keep[r] ? *in[0] : *in[1];
                    if (!dst.requires_grad) continue;
                    for (std::size_t j = 0; j < d; ++j) dst.grad[r * d + j] += o.grad[r * d + j];
                  }
                });
}

Tensor seq_dot(const Tensor& seq, const Tensor& q) {
  require_rank(seq, 3, "seq_dot");
  require_rank(q, 2, "seq_dot query");
  const std::size_t B = seq.dim(0), T = seq.dim(1), d = seq.dim(2);
  if (q.dim(0) != B || q.dim(1) != d) {
    throw DimensionError("seq_dot: query " + shape_str(q.shape()) + " does not match sequence " +
                         shape_str(seq.shape()));
  }
  std::vector<double> out(B * T, 0.0);
  const auto sd = seq.data();
  const auto qd = q.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += sd[(b * T + t) * d + k] * qd[b * d + k];
      out[b * T + t] = acc;
    }
  }
  return finish("seq_dot", make_result({B, T}, std::move(out)), {&seq, &q},
                [B, T, d](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& si = *in[0];
                  auto& qi = *in[1];
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t t = 0; t < T; ++t) {
                      const double g = o.grad[b * T + t];
                      for (std::size_t k = 0; k < d; ++k) {
                        if (si.requires_grad) si.grad[(b * T + t) * d + k] += g * qi.data[b * d + k];
                        if (qi.requires_grad) qi.grad[b * d + k] += g * si.data[(b * T + t) * d + k];
                      }
                    }
                  }
                });
}

Tensor seq_weighted_sum(const Tensor& w, const Tensor& seq) {
  require_rank(seq, 3, "seq_weighted_sum");
  require_rank(w, 2, "seq_weighted_sum weights");
  const std::size_t B = seq.dim(0), T = seq.dim(1), d = seq.dim(2);
  if (w.dim(0) != B || w.dim(1) != T) {
    throw DimensionError("seq_weighted_sum: weights " + shape_str(w.shape()) + " do not match sequence " +
                         shape_str(seq.shape()));
  }
  std::vector<double> out(B * d, 0.0);
  const auto sd = seq.data();
  const auto wd = w.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const double a = wd[b * T + t];
      if (a == 0.0) continue;  // masked positions may hold arbitrary values
      for (std::size_t k = 0; k < d; ++k) out[b * d + k] += a * sd[(b * T + t) * d + k];
    }
  }
  return finish("seq_weighted_sum", make_result({B, d}, std::move(out)), {&w, &seq},
                [B, T, d](const TensorImpl& o, const std::vector<ImplPtr>& in) {
                  auto& wi = *in[0];
                  auto& si = *in[1];
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t t = 0; t < T; ++t) {
                      double acc = 0.0;
                      for (std::size_t k = 0; k < d; ++k) {
                        const double g = o.grad[b * d + k];
                        acc += g * si.data[(b * T + t) * d + k];
                        if (si.requires_grad) si.grad[(b * T + t) * d + k] += g * wi.data[b * T + t];
                      }
                      if (wi.requires_grad) wi.grad[b * T + t] += acc;
                    }
                  }
                });
}

}  // namespace daf
