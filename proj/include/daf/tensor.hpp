#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace daf {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles. Copies share storage (handle semantics,
/// like a shared buffer); use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; zeros of matching size if no backward has touched it.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  /// Same values, cut from any gradient history, no grad requirement.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_result(Shape shape, std::vector<double> values);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Boolean mask with its own shape, used for padded sequence positions.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> on;

  Mask() = default;
  Mask(Shape s, std::vector<std::uint8_t> values);
  static Mask all(Shape s);
  bool operator[](std::size_t i) const { return on[i] != 0; }
  std::size_t size() const { return on.size(); }
  std::size_t count() const;
};

/// Record of executed differentiable operations. Operations record onto the
/// tape installed by a Tape::Scope on the current thread; without one, no
/// history is kept (evaluation mode).
class Tape {
 public:
  struct Entry {
    std::string_view op;
    std::shared_ptr<detail::TensorImpl> output;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::function<void()> backward;
  };

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Reverse accumulation from a scalar loss. Gradients of every tensor on
  /// the tape are reset first, so repeated calls give identical results.
  void backward(const Tensor& loss);

  void record(Entry entry) { entries_.push_back(std::move(entry)); }

 private:
  std::vector<Entry> entries_;
};

/// Test hook: while alive, the gradient an operation of kind `op` passes to
/// its inputs is multiplied by `factor`.
class ScopedGradFault {
 public:
  ScopedGradFault(std::string op, double factor);
  ~ScopedGradFault();
  ScopedGradFault(const ScopedGradFault&) = delete;
  ScopedGradFault& operator=(const ScopedGradFault&) = delete;
};

// Operations. All throw DimensionError on extent mismatch.

Tensor matmul(const Tensor& a, const Tensor& b);
/// Row-wise affine map: leading axes of x are rows, last axis is `in`.
/// w is [out x in], bias (optional, may be empty) is [out].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor affine(const Tensor& x, const Tensor& w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Softmax over the last axis. Masked-out entries are exactly 0; a row with
/// every entry masked is an error.
Tensor softmax(const Tensor& x);
Tensor softmax(const Tensor& x, const Mask& mask);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

/// x[N x d] with row i multiplied by w[i]; w has N entries.
Tensor scale_rows(const Tensor& x, const Tensor& w);
/// Row i taken from a if keep[i], else from b. keep has one entry per row.
Tensor select_rows(const Mask& keep, const Tensor& a, const Tensor& b);
/// seq[B x T x d], q[B x d] -> [B x T] with out[b,t] = <seq[b,t,:], q[b,:]>.
Tensor seq_dot(const Tensor& seq, const Tensor& q);
/// w[B x T], seq[B x T x d] -> [B x d] with out[b,:] = sum_t w[b,t] seq[b,t,:].
Tensor seq_weighted_sum(const Tensor& w, const Tensor& seq);

/// Sign pattern observer for relu inputs, used by the gradient checker to
/// skip finite differences that straddle a kink.
class ReluKinkMonitor {
 public:
  ReluKinkMonitor();
  ~ReluKinkMonitor();
  ReluKinkMonitor(const ReluKinkMonitor&) = delete;
  ReluKinkMonitor& operator=(const ReluKinkMonitor&) = delete;

  void reset() { hash_ = 1469598103934665603ULL; }
  std::uint64_t signature() const { return hash_; }
  void observe(std::span<const double> input);

  static ReluKinkMonitor* active();

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
  ReluKinkMonitor* previous_;
};

}  // namespace daf
