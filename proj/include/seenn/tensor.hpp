#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace seenn {

#ifdef SEENN_SCALAR_FLOAT
using Scalar = float;
#else
using Scalar = double;
#endif

using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct TensorImpl {
  Shape shape;
  Array value;
  Array grad;  // sized lazily on first accumulation
  bool requires_grad = false;
};

/// Dense row-major tensor with optional participation in the active Tape.
/// Copies are shallow; value semantics apply to the handle, not the buffer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Array value, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl>()) {
    if (shape_size(shape) != value.size())
      throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match " +
                                  std::to_string(value.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->value = std::move(value);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Array v = Array::Zero(shape_size(shape));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }
  static Tensor full(Shape shape, Scalar fill, bool requires_grad = false) {
    Array v = Array::Constant(shape_size(shape), fill);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }
  static Tensor scalar(Scalar x, bool requires_grad = false) {
    Array v(1);
    v[0] = x;
    return Tensor({1}, std::move(v), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t size() const { return impl_->value.size(); }
  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  Array& value() { return impl_->value; }
  const Array& value() const { return impl_->value; }
  Scalar item() const { return impl_->value[0]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_->grad.size() == impl_->value.size(); }
  Array& grad() {
    ensure_grad();
    return impl_->grad;
  }
  const Array& grad() const { return impl_->grad; }
  void ensure_grad() {
    if (impl_->grad.size() != impl_->value.size()) impl_->grad = Array::Zero(impl_->value.size());
  }
  void zero_grad() {
    if (impl_->grad.size() > 0) impl_->grad.setZero();
  }

  /// Same buffer, severed from gradient flow.
  Tensor detach() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->value = impl_->value;  // Eigen deep copy; buffers stay independent
    t.impl_->requires_grad = false;
    return t;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw std::invalid_argument("reshape " + shape_str(impl_->shape) + " -> " +
                                  shape_str(shape) + ": element count differs");
    Tensor t = *this;  // shares impl; reshape must not alias with different shapes
    t.impl_ = std::make_shared<TensorImpl>(*impl_);
    t.impl_->shape = std::move(shape);
    return t;
  }

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
  friend class Tape;
};

/// Reverse-mode tape. Ops append a backward closure while a tape is active;
/// backward() replays them in reverse recording order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward) { entries_.push_back(std::move(backward)); }

  void backward(Tensor root) {
    if (root.size() != 1) throw std::invalid_argument("backward() root must be a scalar tensor");
    root.ensure_grad();
    root.grad()[0] = Scalar(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

  static Tape* active() { return active_; }

  /// RAII activation: ops record onto this tape while the scope lives.
  struct Scope {
    explicit Scope(Tape& t) : prev_(active_) { active_ = &t; }
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<std::function<void()>> entries_;
  static thread_local Tape* active_;
};

inline bool grad_enabled(const Tensor& a) { return Tape::active() && a.requires_grad(); }

}  // namespace seenn
