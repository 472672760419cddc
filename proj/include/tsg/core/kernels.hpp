#pragma once

#include <cmath>
#include <cstddef>

#include "tsg/core/tensor.hpp"

// Raw math kernels shared by the autodiff tape (double) and the streaming
// inference engine (double or float). Keeping one implementation per
// operation makes the batch and streaming paths agree to the last bit
// whenever they are fed identical operands.
namespace tsg::kern {

// Logits at or below this value get exactly zero softmax weight after
// max-subtraction (exp underflows), while every tensor stays finite.
inline constexpr double kMaskedLogit = -1e30;

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
  return cdf + x * pdf;
}

template <typename S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

// C = A * B, row-major, ikj order so the inner loop vectorizes.
template <typename S>
void matmul(const TensorT<S>& a, const TensorT<S>& b, TensorT<S>& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const S* pa = a.data();
  const S* pb = b.data();
  S* pc = c.data();
  for (std::size_t i = 0; i < m * n; ++i) pc[i] = S(0);
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = pa + i * k;
    S* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ, " + a.shape_str() + " vs " + b.shape_str());
  }
  TensorT<S> c({a.rows(), b.cols()});
  matmul(a, b, c);
  return c;
}

// C = A^T * B with A (k x m), B (k x n).
template <typename S>
TensorT<S> matmul_at(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at: leading extents differ, " + a.shape_str() + " vs " + b.shape_str());
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  TensorT<S> c({m, n});
  S* pc = c.data();
  for (std::size_t p = 0; p < k; ++p) {
    const S* arow = a.data() + p * m;
    const S* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const S av = arow[i];
      S* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A * B^T with A (m x k), B (n x k).
template <typename S>
TensorT<S> matmul_bt(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: inner extents differ, " + a.shape_str() + " vs " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  TensorT<S> c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const S* brow = b.data() + j * k;
      S acc = S(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c.at(i, j) = acc;
    }
  }
  return c;
}

template <typename S>
void add_bias_rows_inplace(TensorT<S>& x, const TensorT<S>& b) {
  const std::size_t m = x.rows(), n = x.cols();
  if (b.size() != n) {
    throw ShapeError("bias length " + b.shape_str() + " vs row width " + x.shape_str());
  }
  for (std::size_t i = 0; i < m; ++i) {
    S* row = x.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += b.data()[j];
  }
}

template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  TensorT<S> out = matmul(x, w);
  add_bias_rows_inplace(out, b);
  return out;
}

template <typename S, typename F>
TensorT<S> map(const TensorT<S>& x, F f) {
  TensorT<S> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = f(x.at(i));
  return out;
}

// Softmax down each column (normalizes over rows), max-subtracted.
template <typename S>
TensorT<S> softmax_cols(const TensorT<S>& e) {
  const std::size_t m = e.rows(), n = e.cols();
  TensorT<S> s({m, n});
  for (std::size_t j = 0; j < n; ++j) {
    S mx = e.at(0, j);
    for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, e.at(i, j));
    S sum = S(0);
    for (std::size_t i = 0; i < m; ++i) {
      const S v = std::exp(e.at(i, j) - mx);
      s.at(i, j) = v;
      sum += v;
    }
    for (std::size_t i = 0; i < m; ++i) s.at(i, j) /= sum;
  }
  return s;
}

// Softmax along each row, max-subtracted. Entries at or below kMaskedLogit
// come out exactly zero.
template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& e) {
  const std::size_t m = e.rows(), n = e.cols();
  TensorT<S> s({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const S* row = e.data() + i * n;
    S* out = s.data() + i * n;
    S mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::size_t j = 0; j < n; ++j) {
      const S v = std::exp(row[j] - mx);
      out[j] = v;
      sum += v;
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
  }
  return s;
}

// Mean over rows: (m x n) -> (1 x n).
template <typename S>
TensorT<S> mean_rows(const TensorT<S>& x) {
  const std::size_t m = x.rows(), n = x.cols();
  TensorT<S> out({1, n});
  for (std::size_t i = 0; i < m; ++i) {
    const S* row = x.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) out.at(0, j) += row[j];
  }
  const S inv = S(1) / S(m);
  for (std::size_t j = 0; j < n; ++j) out.at(0, j) *= inv;
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row (x - mean) / sqrt(var + eps); optionally reports mean and the
// reciprocal stddev per row for the backward pass.
template <typename S>
TensorT<S> normalize_rows(const TensorT<S>& x, TensorT<S>* mean_out = nullptr,
                          TensorT<S>* inv_std_out = nullptr) {
  const std::size_t m = x.rows(), n = x.cols();
  TensorT<S> out({m, n});
  if (mean_out) *mean_out = TensorT<S>({m});
  if (inv_std_out) *inv_std_out = TensorT<S>({m});
  for (std::size_t i = 0; i < m; ++i) {
    const S* row = x.data() + i * n;
    S mean = S(0);
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= S(n);
    S var = S(0);
    for (std::size_t j = 0; j < n; ++j) {
      const S dxy = row[j] - mean;
      var += dxy * dxy;
    }
    var /= S(n);
    const S inv_std = S(1) / std::sqrt(var + S(kLayerNormEps));
    S* orow = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = (row[j] - mean) * inv_std;
    if (mean_out) mean_out->at(i) = mean;
    if (inv_std_out) inv_std_out->at(i) = inv_std;
  }
  return out;
}

template <typename S>
TensorT<S> layer_norm_rows(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias) {
  TensorT<S> out = normalize_rows(x);
  const std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i) {
    S* row = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = row[j] * gain.at(j) + bias.at(j);
  }
  return out;
}

// Multi-head scaled dot-product attention core: no input/output projections.
// q (m x d), k/v (p x d), d divisible by heads. With `causal` set, query row
// i attends to key rows <= i (requires m == p).
template <typename S>
TensorT<S> multi_head_attention(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                                std::size_t heads, bool causal) {
  const std::size_t m = q.rows(), d = q.cols(), p = k.rows();
  if (k.cols() != d || v.cols() != d || v.rows() != p) {
    throw ShapeError("attention: keys/values must be p x d matching queries' width");
  }
  if (d % heads != 0) throw ShapeError("attention: width not divisible by head count");
  if (causal && m != p) throw ShapeError("attention: causal mask requires square score matrix");
  const std::size_t dh = d / heads;
  const S scale = S(1) / std::sqrt(S(dh));
  TensorT<S> out({m, d});
  std::vector<S> scores(p);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < m; ++i) {
      const S* qrow = q.data() + i * d + off;
      const std::size_t limit = causal ? i + 1 : p;
      S mx = S(kMaskedLogit);
      for (std::size_t j = 0; j < limit; ++j) {
        const S* krow = k.data() + j * d + off;
        S acc = S(0);
        for (std::size_t c = 0; c < dh; ++c) acc += qrow[c] * krow[c];
        scores[j] = acc * scale;
        mx = std::max(mx, scores[j]);
      }
      S sum = S(0);
      for (std::size_t j = 0; j < limit; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      const S inv = S(1) / sum;
      S* orow = out.data() + i * d + off;
      for (std::size_t c = 0; c < dh; ++c) orow[c] = S(0);
      for (std::size_t j = 0; j < limit; ++j) {
        const S w = scores[j] * inv;
        const S* vrow = v.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) orow[c] += w * vrow[c];
      }
    }
  }
  return out;
}

}  // namespace tsg::kern
