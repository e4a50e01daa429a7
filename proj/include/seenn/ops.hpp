#pragma once

#include "seenn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace seenn {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

inline Tensor add(Tensor a, Tensor b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape(), a.value() + b.value(), a.requires_grad() || b.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() += out.grad();
    });
  }
  return out;
}

inline Tensor sub(Tensor a, Tensor b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape(), a.value() - b.value(), a.requires_grad() || b.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() -= out.grad();
    });
  }
  return out;
}

inline Tensor mul(Tensor a, Tensor b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape(), a.value() * b.value(), a.requires_grad() || b.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad() * b.value();
      if (b.requires_grad()) b.grad() += out.grad() * a.value();
    });
  }
  return out;
}

inline Tensor scale(Tensor a, Scalar s) {
  Tensor out(a.shape(), a.value() * s, a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, out, s]() mutable { a.grad() += out.grad() * s; });
  }
  return out;
}

inline Tensor add_scalar(Tensor a, Scalar s) {
  Tensor out(a.shape(), a.value() + s, a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, out]() mutable { a.grad() += out.grad(); });
  }
  return out;
}

inline Tensor reshape(Tensor a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw std::invalid_argument("reshape: element count differs, " + shape_str(a.shape()) +
                                " -> " + shape_str(shape));
  Tensor out(std::move(shape), a.value(), a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, out]() mutable { a.grad() += out.grad(); });
  }
  return out;
}

inline Tensor mean_all(Tensor a) {
  Tensor out = Tensor::scalar(a.value().mean(), a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
    t->record([a, out, inv]() mutable { a.grad() += out.grad()[0] * inv; });
  }
  return out;
}

inline Tensor sum_all(Tensor a) {
  Tensor out = Tensor::scalar(a.value().sum(), a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, out]() mutable { a.grad() += out.grad()[0]; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul / linear
// ---------------------------------------------------------------------------

inline Tensor matmul(Tensor a, Tensor b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Array cv(static_cast<std::int64_t>(m) * n);
  {
    ConstMatMap av(a.value().data(), m, k), bv(b.value().data(), k, n);
    MatMap(cv.data(), m, n) = av * bv;
  }
  Tensor out({m, n}, std::move(cv), a.requires_grad() || b.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, b, out, m, k, n]() mutable {
      ConstMatMap go(out.grad().data(), m, n);
      if (a.requires_grad()) {
        ConstMatMap bv(b.value().data(), k, n);
        MatMap(a.grad().data(), m, k).noalias() += go * bv.transpose();
      }
      if (b.requires_grad()) {
        ConstMatMap av(a.value().data(), m, k);
        MatMap(b.grad().data(), k, n).noalias() += av.transpose() * go;
      }
    });
  }
  return out;
}

/// x[N,M] + bias[M], broadcast over rows.
inline Tensor add_row_bias(Tensor x, Tensor b) {
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_row_bias: " + shape_str(x.shape()) + " + " +
                                shape_str(b.shape()));
  const int n = x.dim(0), m = x.dim(1);
  Array v = x.value();
  for (int i = 0; i < n; ++i) v.segment(static_cast<std::int64_t>(i) * m, m) += b.value();
  Tensor out(x.shape(), std::move(v), x.requires_grad() || b.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, b, out, n, m]() mutable {
      if (x.requires_grad()) x.grad() += out.grad();
      if (b.requires_grad())
        for (int i = 0; i < n; ++i)
          b.grad() += out.grad().segment(static_cast<std::int64_t>(i) * m, m);
    });
  }
  return out;
}

/// x[N,C,H,W] + bias[C], broadcast over batch and spatial dims.
inline Tensor add_channel_bias(Tensor x, Tensor b) {
  if (x.rank() != 4 || b.rank() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_channel_bias: " + shape_str(x.shape()) + " + " +
                                shape_str(b.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  Array v = x.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) v.segment((static_cast<std::int64_t>(i) * c + j) * hw, hw) += b.value()[j];
  Tensor out(x.shape(), std::move(v), x.requires_grad() || b.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, b, out, n, c, hw]() mutable {
      if (x.requires_grad()) x.grad() += out.grad();
      if (b.requires_grad())
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j)
            b.grad()[j] += out.grad().segment((static_cast<std::int64_t>(i) * c + j) * hw, hw).sum();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d (cross-correlation, zero padding) via im2col
// ---------------------------------------------------------------------------

namespace detail {

struct ConvDims {
  int n, c, h, w, f, kh, kw, ho, wo, stride, pad;
};

inline ConvDims conv_dims(const Tensor& x, const Tensor& wgt, int stride, int pad) {
  if (x.rank() != 4 || wgt.rank() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and weight, got " +
                                shape_str(x.shape()) + " and " + shape_str(wgt.shape()));
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
             wgt.dim(0), wgt.dim(2), wgt.dim(3), 0, 0, stride, pad};
  if (wgt.dim(1) != d.c)
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(wgt.shape()));
  const int eh = d.h + 2 * pad - d.kh, ew = d.w + 2 * pad - d.kw;
  if (eh < 0 || ew < 0)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  if (eh % stride != 0 || ew % stride != 0)
    throw std::invalid_argument("conv2d: non-integral output size for input " +
                                shape_str(x.shape()) + ", kernel " + shape_str(wgt.shape()) +
                                ", stride " + std::to_string(stride) + ", pad " +
                                std::to_string(pad));
  d.ho = eh / stride + 1;
  d.wo = ew / stride + 1;
  return d;
}

/// Unpack one image [C,H,W] into columns [C*kh*kw, ho*wo].
inline void im2col(const Scalar* img, const ConvDims& d, Scalar* col) {
  const std::int64_t ncols = static_cast<std::int64_t>(d.ho) * d.wo;
  std::int64_t r = 0;
  for (int c = 0; c < d.c; ++c)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx, ++r) {
        Scalar* dst = col + r * ncols;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          for (int ox = 0; ox < d.wo; ++ox, ++dst) {
            const int ix = ox * d.stride + kx - d.pad;
            *dst = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                       ? img[(static_cast<std::int64_t>(c) * d.h + iy) * d.w + ix]
                       : Scalar(0);
          }
        }
      }
}

/// Scatter-add columns back into an image gradient.
inline void col2im_add(const Scalar* col, const ConvDims& d, Scalar* img) {
  const std::int64_t ncols = static_cast<std::int64_t>(d.ho) * d.wo;
  std::int64_t r = 0;
  for (int c = 0; c < d.c; ++c)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx, ++r) {
        const Scalar* src = col + r * ncols;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          for (int ox = 0; ox < d.wo; ++ox, ++src) {
            const int ix = ox * d.stride + kx - d.pad;
            if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
              img[(static_cast<std::int64_t>(c) * d.h + iy) * d.w + ix] += *src;
          }
        }
      }
}

}  // namespace detail

inline Tensor conv2d(Tensor x, Tensor w, int stride = 1, int pad = 0) {
  const auto d = detail::conv_dims(x, w, stride, pad);
  const std::int64_t krows = static_cast<std::int64_t>(d.c) * d.kh * d.kw;
  const std::int64_t ncols = static_cast<std::int64_t>(d.ho) * d.wo;
  Array out_v(static_cast<std::int64_t>(d.n) * d.f * ncols);
  Array col(krows * ncols);
  ConstMatMap wm(w.value().data(), d.f, krows);
  for (int i = 0; i < d.n; ++i) {
    detail::im2col(x.value().data() + static_cast<std::int64_t>(i) * d.c * d.h * d.w, d, col.data());
    ConstMatMap cm(col.data(), krows, ncols);
    MatMap(out_v.data() + static_cast<std::int64_t>(i) * d.f * ncols, d.f, ncols).noalias() =
        wm * cm;
  }
  Tensor out({d.n, d.f, d.ho, d.wo}, std::move(out_v), x.requires_grad() || w.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, w, out, d, krows, ncols]() mutable {
      Array col(krows * ncols), dcol(krows * ncols);
      ConstMatMap wm(w.value().data(), d.f, krows);
      for (int i = 0; i < d.n; ++i) {
        ConstMatMap go(out.grad().data() + static_cast<std::int64_t>(i) * d.f * ncols, d.f, ncols);
        if (w.requires_grad()) {
          detail::im2col(x.value().data() + static_cast<std::int64_t>(i) * d.c * d.h * d.w, d,
                         col.data());
          ConstMatMap cm(col.data(), krows, ncols);
          MatMap(w.grad().data(), d.f, krows).noalias() += go * cm.transpose();
        }
        if (x.requires_grad()) {
          MatMap(dcol.data(), krows, ncols).noalias() = wm.transpose() * go;
          detail::col2im_add(dcol.data(), d,
                             x.grad().data() + static_cast<std::int64_t>(i) * d.c * d.h * d.w);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

inline Tensor global_avg_pool(Tensor x) {
  if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: expected N,C,H,W");
  const int n = x.dim(0), c = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  Array v(static_cast<std::int64_t>(n) * c);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n) * c; ++i)
    v[i] = x.value().segment(i * hw, hw).mean();
  Tensor out({n, c}, std::move(v), x.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    const Scalar inv = Scalar(1) / static_cast<Scalar>(hw);
    t->record([x, out, n, c, hw, inv]() mutable {
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(n) * c; ++i)
        x.grad().segment(i * hw, hw) += out.grad()[i] * inv;
    });
  }
  return out;
}

/// Non-overlapping average pooling by integer factor (policy-net downsampling).
inline Tensor avg_pool2d(Tensor x, int factor) {
  if (x.rank() != 4) throw std::invalid_argument("avg_pool2d: expected N,C,H,W");
  if (factor < 1 || x.dim(2) % factor != 0 || x.dim(3) % factor != 0)
    throw std::invalid_argument("avg_pool2d: factor " + std::to_string(factor) +
                                " does not divide " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h / factor, wo = w / factor;
  Array v(static_cast<std::int64_t>(n) * c * ho * wo);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(factor * factor);
  for (int i = 0; i < n * c; ++i) {
    const Scalar* src = x.value().data() + static_cast<std::int64_t>(i) * h * w;
    Scalar* dst = v.data() + static_cast<std::int64_t>(i) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        Scalar s = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            s += src[(oy * factor + dy) * w + (ox * factor + dx)];
        dst[oy * wo + ox] = s * inv;
      }
  }
  Tensor out({n, c, ho, wo}, std::move(v), x.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, out, n, c, h, w, ho, wo, factor, inv]() mutable {
      for (int i = 0; i < n * c; ++i) {
        Scalar* dst = x.grad().data() + static_cast<std::int64_t>(i) * h * w;
        const Scalar* src = out.grad().data() + static_cast<std::int64_t>(i) * ho * wo;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox)
            for (int dy = 0; dy < factor; ++dy)
              for (int dx = 0; dx < factor; ++dx)
                dst[(oy * factor + dy) * w + (ox * factor + dx)] += src[oy * wo + ox] * inv;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / cross-entropy
// ---------------------------------------------------------------------------

/// Softmax along the last axis, max-subtracted for stability.
inline Tensor softmax(Tensor logits) {
  if (logits.rank() < 1 || logits.dim(logits.rank() - 1) < 2)
    throw std::invalid_argument("softmax: last axis must have at least 2 entries");
  const int m = logits.dim(logits.rank() - 1);
  const std::int64_t rows = logits.size() / m;
  Array v(logits.size());
  for (std::int64_t i = 0; i < rows; ++i) {
    auto seg = logits.value().segment(i * m, m);
    Array e = (seg - seg.maxCoeff()).exp();
    v.segment(i * m, m) = e / e.sum();
  }
  Tensor out(logits.shape(), std::move(v), logits.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([logits, out, rows, m]() mutable {
      for (std::int64_t i = 0; i < rows; ++i) {
        auto p = out.value().segment(i * m, m);
        auto g = out.grad().segment(i * m, m);
        const Scalar dot = (p * g).sum();
        logits.grad().segment(i * m, m) += p * (g - dot);
      }
    });
  }
  return out;
}

/// Elementwise natural log (used on policy probabilities).
inline Tensor log(Tensor a) {
  Tensor out(a.shape(), a.value().log(), a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, out]() mutable { a.grad() += out.grad() / a.value(); });
  }
  return out;
}

/// Mean over the batch of -log softmax(logits)[label].
inline Tensor cross_entropy(Tensor logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: expected N,M logits");
  const int n = logits.dim(0), m = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  Array probs(logits.size());
  Scalar loss = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= m)
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " out of range [0," + std::to_string(m) + ")");
    auto seg = logits.value().segment(static_cast<std::int64_t>(i) * m, m);
    const Scalar mx = seg.maxCoeff();
    Array e = (seg - mx).exp();
    const Scalar z = e.sum();
    probs.segment(static_cast<std::int64_t>(i) * m, m) = e / z;
    loss -= (seg[labels[i]] - mx) - std::log(z);
  }
  Tensor out = Tensor::scalar(loss / n, logits.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([logits, out, probs, labels, n, m]() mutable {
      const Scalar g = out.grad()[0] / n;
      for (int i = 0; i < n; ++i) {
        logits.grad().segment(static_cast<std::int64_t>(i) * m, m) +=
            g * probs.segment(static_cast<std::int64_t>(i) * m, m);
        logits.grad()[static_cast<std::int64_t>(i) * m + labels[i]] -= g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch normalization (per-feature for rank-2, per-channel for rank-4)
// ---------------------------------------------------------------------------

namespace detail {
/// Gathers the indices belonging to feature j; rank-2 -> column j,
/// rank-4 -> channel j over batch and space.
struct BnLayout {
  int features;
  std::int64_t group;   // contiguous elements per (sample, feature)
  std::int64_t stride;  // elements per sample
  int n;
};

inline BnLayout bn_layout(const Tensor& x) {
  if (x.rank() == 2) return {x.dim(1), 1, x.dim(1), x.dim(0)};
  if (x.rank() == 4)
    return {x.dim(1), static_cast<std::int64_t>(x.dim(2)) * x.dim(3),
            static_cast<std::int64_t>(x.dim(1)) * x.dim(2) * x.dim(3), x.dim(0)};
  throw std::invalid_argument("batch_norm: expected rank 2 or 4, got " + shape_str(x.shape()));
}
}  // namespace detail

/// Training-mode BN: batch statistics, updates running stats in place.
/// Eval mode: affine transform with the provided running statistics.
inline Tensor batch_norm(Tensor x, Tensor gamma, Tensor beta, Array& running_mean,
                         Array& running_var, bool training, Scalar momentum = Scalar(0.1),
                         Scalar eps = Scalar(1e-5)) {
  const auto ly = detail::bn_layout(x);
  if (gamma.size() != ly.features || beta.size() != ly.features)
    throw std::invalid_argument("batch_norm: affine parameter size mismatch");
  const std::int64_t per_feat = static_cast<std::int64_t>(ly.n) * ly.group;

  Array mean(ly.features), var(ly.features);
  if (training) {
    for (int j = 0; j < ly.features; ++j) {
      Scalar s = 0, s2 = 0;
      for (int i = 0; i < ly.n; ++i) {
        auto seg = x.value().segment(i * ly.stride + j * ly.group, ly.group);
        s += seg.sum();
        s2 += seg.square().sum();
      }
      mean[j] = s / per_feat;
      var[j] = s2 / per_feat - mean[j] * mean[j];
    }
    running_mean = (1 - momentum) * running_mean + momentum * mean;
    running_var = (1 - momentum) * running_var + momentum * var;
  } else {
    mean = running_mean;
    var = running_var;
  }

  Array inv_std = (var + eps).sqrt().inverse();
  Array v(x.size());
  Array xhat(x.size());
  for (int j = 0; j < ly.features; ++j)
    for (int i = 0; i < ly.n; ++i) {
      const std::int64_t off = i * ly.stride + j * ly.group;
      auto xh = (x.value().segment(off, ly.group) - mean[j]) * inv_std[j];
      xhat.segment(off, ly.group) = xh;
      v.segment(off, ly.group) = gamma.value()[j] * xh + beta.value()[j];
    }
  Tensor out(x.shape(), std::move(v),
             x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, gamma, beta, out, xhat, inv_std, ly, per_feat, training]() mutable {
      for (int j = 0; j < ly.features; ++j) {
        Scalar dg = 0, db = 0;
        for (int i = 0; i < ly.n; ++i) {
          const std::int64_t off = i * ly.stride + j * ly.group;
          dg += (out.grad().segment(off, ly.group) * xhat.segment(off, ly.group)).sum();
          db += out.grad().segment(off, ly.group).sum();
        }
        if (gamma.requires_grad()) gamma.grad()[j] += dg;
        if (beta.requires_grad()) beta.grad()[j] += db;
        if (x.requires_grad()) {
          const Scalar k = gamma.value()[j] * inv_std[j];
          if (training) {
            const Scalar mdy = db / per_feat, mdyx = dg / per_feat;
            for (int i = 0; i < ly.n; ++i) {
              const std::int64_t off = i * ly.stride + j * ly.group;
              x.grad().segment(off, ly.group) +=
                  k * (out.grad().segment(off, ly.group) - mdy -
                       xhat.segment(off, ly.group) * mdyx);
            }
          } else {
            for (int i = 0; i < ly.n; ++i) {
              const std::int64_t off = i * ly.stride + j * ly.group;
              x.grad().segment(off, ly.group) += k * out.grad().segment(off, ly.group);
            }
          }
        }
      }
    });
  }
  return out;
}

inline Tensor relu(Tensor a) {
  Tensor out(a.shape(), a.value().max(Scalar(0)), a.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([a, out]() mutable {
      for (std::int64_t i = 0; i < out.grad().size(); ++i)
        if (a.value()[i] > 0) a.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

/// Per-sample -log softmax(logits)[label], shape [N].
inline Tensor cross_entropy_per_sample(Tensor logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy_per_sample: expected N,M");
  const int n = logits.dim(0), m = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy_per_sample: label count mismatch");
  Array probs(logits.size());
  Array v(n);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= m)
      throw std::out_of_range("cross_entropy_per_sample: label out of range");
    auto seg = logits.value().segment(static_cast<std::int64_t>(i) * m, m);
    const Scalar mx = seg.maxCoeff();
    Array e = (seg - mx).exp();
    const Scalar z = e.sum();
    probs.segment(static_cast<std::int64_t>(i) * m, m) = e / z;
    v[i] = -((seg[labels[i]] - mx) - std::log(z));
  }
  Tensor out({n}, std::move(v), logits.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([logits, out, probs, labels, n, m]() mutable {
      for (int i = 0; i < n; ++i) {
        const Scalar g = out.grad()[i];
        logits.grad().segment(static_cast<std::int64_t>(i) * m, m) +=
            g * probs.segment(static_cast<std::int64_t>(i) * m, m);
        logits.grad()[static_cast<std::int64_t>(i) * m + labels[i]] -= g;
      }
    });
  }
  return out;
}

/// Column j of a [N,M] tensor as a [N] vector.
inline Tensor select_column(Tensor x, int j) {
  if (x.rank() != 2 || j < 0 || j >= x.dim(1))
    throw std::invalid_argument("select_column: bad column " + std::to_string(j) + " for " +
                                shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  Array v(n);
  for (int i = 0; i < n; ++i) v[i] = x.value()[static_cast<std::int64_t>(i) * m + j];
  Tensor out({n}, std::move(v), x.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, out, n, m, j]() mutable {
      for (int i = 0; i < n; ++i)
        x.grad()[static_cast<std::int64_t>(i) * m + j] += out.grad()[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// quantized clipped activation (QCFS-style): l steps, learnable ceiling
// ---------------------------------------------------------------------------

/// y = clip(floor(x*l/lambda + 0.5), 0, l) * lambda/l.
/// Backward: straight-through on x inside (0, lambda); the ceiling gets the
/// clipped region's gradient.
inline Tensor quant_act(Tensor x, Tensor lambda, int l) {
  if (lambda.size() != 1) throw std::invalid_argument("quant_act: lambda must be a scalar tensor");
  if (l < 1) throw std::invalid_argument("quant_act: l must be >= 1");
  const Scalar lam = lambda.value()[0];
  Array v(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const Scalar q = std::floor(x.value()[i] * l / lam + Scalar(0.5));
    v[i] = std::clamp(q, Scalar(0), Scalar(l)) * lam / l;
  }
  Tensor out(x.shape(), std::move(v), x.requires_grad() || lambda.requires_grad());
  if (Tape* t = Tape::active(); t && out.requires_grad()) {
    t->record([x, lambda, out, lam]() mutable {
      for (std::int64_t i = 0; i < out.grad().size(); ++i) {
        const Scalar xi = x.value()[i];
        if (x.requires_grad() && xi > 0 && xi < lam) x.grad()[i] += out.grad()[i];
        if (lambda.requires_grad() && xi >= lam) lambda.grad()[0] += out.grad()[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// row ops for batched early exit
// ---------------------------------------------------------------------------

/// Select rows along axis 0 (no gradient; evaluation-time compaction).
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  const std::int64_t stride = x.size() / x.dim(0);
  Shape s = x.shape();
  s[0] = static_cast<int>(rows.size());
  Array v(stride * static_cast<std::int64_t>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    v.segment(static_cast<std::int64_t>(i) * stride, stride) =
        x.value().segment(static_cast<std::int64_t>(rows[i]) * stride, stride);
  return Tensor(std::move(s), std::move(v), false);
}

}  // namespace seenn
