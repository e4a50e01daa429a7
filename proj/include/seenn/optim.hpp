#pragma once

#include "seenn/tensor.hpp"

#include <cmath>

namespace seenn {

/// Cosine annealing: lr0 at epoch 0 down to 0 at total_epochs.
inline Scalar cosine_lr(int epoch, int total_epochs, Scalar lr0) {
  if (epoch < 0 || epoch > total_epochs)
    throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) + " outside [0," +
                                std::to_string(total_epochs) + "]");
  const double pi = 3.14159265358979323846;
  return lr0 * static_cast<Scalar>((1.0 + std::cos(pi * epoch / total_epochs)) / 2.0);
}

/// SGD with classical momentum and decoupled-from-nothing weight decay:
///   v <- momentum * v + grad + wd * param;  param <- param - lr * v
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, Scalar lr, Scalar momentum = Scalar(0.9),
               Scalar weight_decay = Scalar(0))
      : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    if (lr <= 0) throw std::invalid_argument("SgdOptimizer: lr must be positive");
    if (momentum < 0 || momentum >= 1)
      throw std::invalid_argument("SgdOptimizer: momentum must be in [0,1)");
    velocities_.reserve(params_.size());
    for (auto& p : params_) velocities_.push_back(Array::Zero(p.size()));
  }

  void set_lr(Scalar lr) { lr_ = lr; }
  Scalar lr() const { return lr_; }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) continue;
      velocities_[i] = momentum_ * velocities_[i] + p.grad() + weight_decay_ * p.value();
      p.value() -= lr_ * velocities_[i];
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor> params_;
  std::vector<Array> velocities_;
  Scalar lr_, momentum_, weight_decay_;
};

/// One-shot functional form used in tests and simple loops.
inline void sgd_step(Tensor& param, const Array& grad, Array& velocity, Scalar lr, Scalar momentum,
                     Scalar weight_decay) {
  if (lr <= 0) throw std::invalid_argument("sgd_step: lr must be positive");
  if (momentum < 0 || momentum >= 1)
    throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
  velocity = momentum * velocity + grad + weight_decay * param.value();
  param.value() -= lr * velocity;
}

}  // namespace seenn
