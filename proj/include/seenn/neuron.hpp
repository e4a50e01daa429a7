#pragma once

#include "seenn/ops.hpp"

#include <cmath>
#include <utility>

namespace seenn {

enum class ResetMode { ZeroReset, SubtractReset };

enum class SurrogateKind { Triangular, Rectangular, Sigmoid };

struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::Triangular;
  Scalar width = Scalar(1);  // support half-width (temperature for Sigmoid)
};

/// dH/du estimate at u - V. Non-negative, bounded, symmetric about 0.
inline Scalar surrogate_derivative(Scalar x, const SurrogateConfig& cfg) {
  switch (cfg.kind) {
    case SurrogateKind::Triangular:
      return std::max(Scalar(0), Scalar(1) - std::abs(x) / cfg.width) / cfg.width;
    case SurrogateKind::Rectangular:
      return std::abs(x) < cfg.width / 2 ? Scalar(1) / cfg.width : Scalar(0);
    case SurrogateKind::Sigmoid: {
      const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-x / cfg.width));
      return s * (Scalar(1) - s) / cfg.width;
    }
  }
  return 0;
}

/// Antiderivative of the surrogate; a smooth stand-in for the Heaviside used
/// by the finite-difference gradient oracle (forward-smoothed twin).
inline Scalar surrogate_antiderivative(Scalar x, const SurrogateConfig& cfg) {
  switch (cfg.kind) {
    case SurrogateKind::Triangular: {
      const Scalar w = cfg.width;
      if (x <= -w) return 0;
      if (x >= w) return 1;
      if (x < 0) return (x + w) * (x + w) / (2 * w * w);
      return Scalar(1) - (w - x) * (w - x) / (2 * w * w);
    }
    case SurrogateKind::Rectangular:
      return std::clamp(x / cfg.width + Scalar(0.5), Scalar(0), Scalar(1));
    case SurrogateKind::Sigmoid:
      return Scalar(1) / (Scalar(1) + std::exp(-x / cfg.width));
  }
  return 0;
}

struct NeuronConfig {
  Scalar tau = Scalar(0.5);       // leak in (0,1]
  Scalar threshold = Scalar(1);   // V > 0
  ResetMode reset = ResetMode::ZeroReset;
  Scalar init_charge = Scalar(0);  // initial membrane as fraction of V (conversion uses 1/2)
  SurrogateConfig surrogate{};
  bool detach_reset = true;   // gradient flows only through the leak term of the reset
  bool soft_forward = false;  // forward = surrogate antiderivative (gradient-check twin)

  static NeuronConfig training_default() { return {}; }
  static NeuronConfig conversion_default(Scalar threshold) {
    NeuronConfig c;
    c.tau = Scalar(1);
    c.threshold = threshold;
    c.reset = ResetMode::SubtractReset;
    c.init_charge = Scalar(0.5);
    return c;
  }
};

/// Firing nonlinearity on (u' - V): exact Heaviside forward, surrogate backward.
inline Tensor spike(Tensor u_minus_v, const SurrogateConfig& cfg, bool soft_forward = false) {
  Array v(u_minus_v.size());
  if (soft_forward) {
    for (std::int64_t i = 0; i < v.size(); ++i)
      v[i] = surrogate_antiderivative(u_minus_v.value()[i], cfg);
  } else {
    for (std::int64_t i = 0; i < v.size(); ++i)
      v[i] = u_minus_v.value()[i] >= 0 ? Scalar(1) : Scalar(0);
  }
  Tensor out(u_minus_v.shape(), std::move(v), u_minus_v.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([u_minus_v, out, cfg]() mutable {
      for (std::int64_t i = 0; i < out.grad().size(); ++i)
        u_minus_v.grad()[i] += out.grad()[i] * surrogate_derivative(u_minus_v.value()[i], cfg);
    });
  }
  return out;
}

/// One membrane update: u' = tau*u + current; spikes = H(u' - V); reset.
/// Differentiable end to end when recorded on a tape (reset factor detached
/// unless cfg.detach_reset is off).
inline std::pair<Tensor, Tensor> lif_step(Tensor u, Tensor current, const NeuronConfig& cfg) {
  check_same_shape(u, current, "lif_step");
  Tensor u_pre = add(scale(u, cfg.tau), current);
  Tensor s = spike(add_scalar(u_pre, -cfg.threshold), cfg.surrogate, cfg.soft_forward);
  Tensor s_reset = cfg.detach_reset ? s.detach() : s;
  Tensor u_next;
  if (cfg.reset == ResetMode::ZeroReset) {
    Tensor keep = sub(Tensor::full(s_reset.shape(), Scalar(1)), s_reset);
    u_next = mul(u_pre, keep);
  } else {
    u_next = sub(u_pre, scale(s_reset, cfg.threshold));
  }
  return {s, u_next};
}

}  // namespace seenn
