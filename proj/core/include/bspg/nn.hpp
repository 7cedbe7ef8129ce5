/* Copyright 2026 the bspg authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bspg/errors.hpp"
#include "bspg/rng.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

// Learnable tensor plus its gradient and momentum buffers. Layers accumulate
// into grad on backward; the optimizer consumes and clears it.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  Tensor<S> momentum;
  bool trainable = true;

  void allocate(std::vector<int> shape) {
    value = Tensor<S>(shape);
    grad = Tensor<S>(shape);
    momentum = Tensor<S>(std::move(shape));
  }
};

template <typename S>
void zero_grads(const std::vector<Param<S>*>& params) {
  for (Param<S>* p : params) p->grad.zero();
}

template <typename S>
void sgd_step(const std::vector<Param<S>*>& params, S lr, S momentum_coef) {
  for (Param<S>* p : params) {
    if (!p->trainable) continue;
    p->momentum.vec() = momentum_coef * p->momentum.vec() + p->grad.vec();
    p->value.vec() -= lr * p->momentum.vec();
  }
}

namespace detail {

// Writes the (C*k*k, out_positions) patch matrix for one sample into `col`,
// whose rows are `row_stride` long; the sample occupies columns
// [col_offset, col_offset + oh*ow). Out-of-image taps are zero.
template <typename S>
void im2col_block(const S* x, int C, int H, int W, int k, int stride, int pad, S* col,
                  std::int64_t row_stride, std::int64_t col_offset) {
  const int oh = (H + 2 * pad - k) / stride + 1;
  const int ow = (W + 2 * pad - k) / stride + 1;
  std::int64_t row = 0;
  for (int c = 0; c < C; ++c) {
    const S* src = x + static_cast<std::int64_t>(c) * H * W;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        S* dst = col + row * row_stride + col_offset;
        std::int64_t l = 0;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + kh;
          for (int ox = 0; ox < ow; ++ox, ++l) {
            const int ix = ox * stride - pad + kw;
            dst[l] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                         ? src[static_cast<std::int64_t>(iy) * W + ix]
                         : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_block(const S* col, int C, int H, int W, int k, int stride, int pad, S* dx,
                  std::int64_t row_stride, std::int64_t col_offset) {
  const int oh = (H + 2 * pad - k) / stride + 1;
  const int ow = (W + 2 * pad - k) / stride + 1;
  std::int64_t row = 0;
  for (int c = 0; c < C; ++c) {
    S* dst = dx + static_cast<std::int64_t>(c) * H * W;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        const S* src = col + row * row_stride + col_offset;
        std::int64_t l = 0;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + kh;
          for (int ox = 0; ox < ow; ++ox, ++l) {
            const int ix = ox * stride - pad + kw;
            if (iy >= 0 && iy < H && ix >= 0 && ix < W)
              dst[static_cast<std::int64_t>(iy) * W + ix] += src[l];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Square-kernel 2D convolution over (C,H,W) or (N,C,H,W) inputs, lowered to
// a single GEMM per call via im2col. Forward fills an optional cache; the
// matching backward recomputes the patch matrix from it (cheaper than
// keeping both buffers alive across the episode).
template <typename S>
class Conv2d {
 public:
  Param<S> w;  // (out_ch, in_ch, k, k)
  Param<S> b;  // (out_ch)
  int kernel = 0;
  int stride = 1;
  int pad = 0;

  struct Cache {
    Tensor<S> input;
  };

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride_, int pad_, Rng& rng)
      : kernel(k), stride(stride_), pad(pad_) {
    w.allocate({out_ch, in_ch, k, k});
    b.allocate({out_ch});
    const double he = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    for (std::size_t i = 0; i < w.value.numel(); ++i)
      w.value[i] = static_cast<S>(rng.normal(0.0, he));
  }

  int in_channels() const { return w.value.dim(1); }
  int out_channels() const { return w.value.dim(0); }

  Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
    require(x.rank() == 3 || x.rank() == 4, ErrorKind::shape, "conv input must be rank 3 or 4");
    const bool batched = x.rank() == 4;
    const int n = batched ? x.dim(0) : 1;
    const int c = batched ? x.dim(1) : x.dim(0);
    const int h = batched ? x.dim(2) : x.dim(1);
    const int wd = batched ? x.dim(3) : x.dim(2);
    require(c == in_channels(), ErrorKind::shape, "conv channel mismatch");
    require(h + 2 * pad >= kernel && wd + 2 * pad >= kernel, ErrorKind::shape,
            "conv input smaller than kernel");
    const int oh = (h + 2 * pad - kernel) / stride + 1;
    const int ow = (wd + 2 * pad - kernel) / stride + 1;
    const int l = oh * ow;
    const int ckk = c * kernel * kernel;
    const int oc = out_channels();

    Tensor<S> col({ckk, n * l});
    const std::int64_t sample = static_cast<std::int64_t>(c) * h * wd;
    for (int i = 0; i < n; ++i)
      detail::im2col_block(x.data() + i * sample, c, h, wd, kernel, stride, pad, col.data(),
                           static_cast<std::int64_t>(n) * l, static_cast<std::int64_t>(i) * l);

    Tensor<S> big({oc, n * l});
    big.mat(oc, n * l).noalias() = w.value.mat(oc, ckk) * col.mat(ckk, n * l);
    big.mat(oc, n * l).colwise() += b.value.vec();

    if (cache) cache->input = x;
    if (!batched) return big.reshaped({oc, oh, ow});

    Tensor<S> out({n, oc, oh, ow});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < oc; ++j) {
        const S* src = big.data() + static_cast<std::int64_t>(j) * n * l + i * l;
        S* dst = out.data() + (static_cast<std::int64_t>(i) * oc + j) * l;
        std::copy(src, src + l, dst);
      }
    return out;
  }

  // Accumulates into w.grad / b.grad; returns d(loss)/d(input).
  Tensor<S> backward(const Cache& cache, const Tensor<S>& dy) {
    const Tensor<S>& x = cache.input;
    require(!x.empty(), ErrorKind::state, "conv backward without forward cache");
    const bool batched = x.rank() == 4;
    const int n = batched ? x.dim(0) : 1;
    const int c = batched ? x.dim(1) : x.dim(0);
    const int h = batched ? x.dim(2) : x.dim(1);
    const int wd = batched ? x.dim(3) : x.dim(2);
    const int oh = (h + 2 * pad - kernel) / stride + 1;
    const int ow = (wd + 2 * pad - kernel) / stride + 1;
    const int l = oh * ow;
    const int ckk = c * kernel * kernel;
    const int oc = out_channels();
    require(dy.numel() == static_cast<std::size_t>(n) * oc * l, ErrorKind::shape,
            "conv backward dy shape mismatch");

    Tensor<S> dybig({oc, n * l});
    if (batched) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < oc; ++j) {
          const S* src = dy.data() + (static_cast<std::int64_t>(i) * oc + j) * l;
          S* dst = dybig.data() + static_cast<std::int64_t>(j) * n * l + i * l;
          std::copy(src, src + l, dst);
        }
    } else {
      std::copy(dy.data(), dy.data() + dy.numel(), dybig.data());
    }

    Tensor<S> col({ckk, n * l});
    const std::int64_t sample = static_cast<std::int64_t>(c) * h * wd;
    for (int i = 0; i < n; ++i)
      detail::im2col_block(x.data() + i * sample, c, h, wd, kernel, stride, pad, col.data(),
                           static_cast<std::int64_t>(n) * l, static_cast<std::int64_t>(i) * l);

    w.grad.mat(oc, ckk).noalias() += dybig.mat(oc, n * l) * col.mat(ckk, n * l).transpose();
    b.grad.vec() += dybig.mat(oc, n * l).rowwise().sum();

    Tensor<S> dcol({ckk, n * l});
    dcol.mat(ckk, n * l).noalias() = w.value.mat(oc, ckk).transpose() * dybig.mat(oc, n * l);

    Tensor<S> dx(x.shape());
    for (int i = 0; i < n; ++i)
      detail::col2im_block(dcol.data(), c, h, wd, kernel, stride, pad, dx.data() + i * sample,
                           static_cast<std::int64_t>(n) * l, static_cast<std::int64_t>(i) * l);
    return dx;
  }
};

// Fully connected layer over (N,in) or (in) inputs.
template <typename S>
class Linear {
 public:
  Param<S> w;  // (out, in)
  Param<S> b;  // (out)

  struct Cache {
    Tensor<S> input;
  };

  Linear() = default;
  Linear(int in, int out, Rng& rng, double weight_std) {
    w.allocate({out, in});
    b.allocate({out});
    for (std::size_t i = 0; i < w.value.numel(); ++i)
      w.value[i] = static_cast<S>(rng.normal(0.0, weight_std));
  }

  int in_features() const { return w.value.dim(1); }
  int out_features() const { return w.value.dim(0); }

  Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
    require(x.rank() == 1 || x.rank() == 2, ErrorKind::shape, "linear input must be rank 1 or 2");
    const int n = x.rank() == 2 ? x.dim(0) : 1;
    const int in = x.rank() == 2 ? x.dim(1) : x.dim(0);
    require(in == in_features(), ErrorKind::shape, "linear feature mismatch");
    const int out = out_features();
    Tensor<S> y = x.rank() == 2 ? Tensor<S>({n, out}) : Tensor<S>({out});
    y.mat(n, out).noalias() = x.mat(n, in) * w.value.mat(out, in).transpose();
    y.mat(n, out).rowwise() += b.value.vec().transpose();
    if (cache) cache->input = x;
    return y;
  }

  Tensor<S> backward(const Cache& cache, const Tensor<S>& dy) {
    const Tensor<S>& x = cache.input;
    require(!x.empty(), ErrorKind::state, "linear backward without forward cache");
    const int n = x.rank() == 2 ? x.dim(0) : 1;
    const int in = in_features();
    const int out = out_features();
    require(dy.numel() == static_cast<std::size_t>(n) * out, ErrorKind::shape,
            "linear backward dy shape mismatch");
    w.grad.mat(out, in).noalias() += dy.mat(n, out).transpose() * x.mat(n, in);
    b.grad.vec() += dy.mat(n, out).colwise().sum();
    Tensor<S> dx(x.shape());
    dx.mat(n, in).noalias() = dy.mat(n, out) * w.value.mat(out, in);
    return dx;
  }
};

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = x;
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (y[i] < S(0)) y[i] = S(0);
  return y;
}

// Uses the forward output as the mask; exact because relu(x) > 0 iff x > 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& dy, const Tensor<S>& y) {
  require(dy.same_shape(y), ErrorKind::shape, "relu backward shape mismatch");
  Tensor<S> dx = dy;
  for (std::size_t i = 0; i < dx.numel(); ++i)
    if (y[i] <= S(0)) dx[i] = S(0);
  return dx;
}

// (C,H,W) -> (C) or (N,C,H,W) -> (N,C), mean over the spatial extent.
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  require(x.rank() == 3 || x.rank() == 4, ErrorKind::shape, "gap input must be rank 3 or 4");
  const bool batched = x.rank() == 4;
  const int n = batched ? x.dim(0) : 1;
  const int c = batched ? x.dim(1) : x.dim(0);
  const int hw = batched ? x.dim(2) * x.dim(3) : x.dim(1) * x.dim(2);
  require(hw > 0, ErrorKind::shape, "gap over empty spatial extent");
  Tensor<S> y = batched ? Tensor<S>({n, c}) : Tensor<S>({c});
  const S inv = S(1) / static_cast<S>(hw);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const S* src = x.data() + (static_cast<std::int64_t>(i) * c + j) * hw;
      S acc = S(0);
      for (int k = 0; k < hw; ++k) acc += src[k];
      y[static_cast<std::size_t>(i) * c + j] = acc * inv;
    }
  return y;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const Tensor<S>& dy, const std::vector<int>& in_shape) {
  Tensor<S> dx(in_shape);
  const bool batched = in_shape.size() == 4;
  const int n = batched ? in_shape[0] : 1;
  const int c = batched ? in_shape[1] : in_shape[0];
  const int hw = batched ? in_shape[2] * in_shape[3] : in_shape[1] * in_shape[2];
  require(dy.numel() == static_cast<std::size_t>(n) * c, ErrorKind::shape,
          "gap backward dy shape mismatch");
  const S inv = S(1) / static_cast<S>(hw);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const S g = dy[static_cast<std::size_t>(i) * c + j] * inv;
      S* dst = dx.data() + (static_cast<std::int64_t>(i) * c + j) * hw;
      for (int k = 0; k < hw; ++k) dst[k] = g;
    }
  return dx;
}

// Row-wise softmax with max subtraction; logits (N,C).
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& logits) {
  require(logits.rank() == 2, ErrorKind::shape, "softmax expects (N,C)");
  Tensor<S> p = logits;
  const int n = p.dim(0);
  const int c = p.dim(1);
  for (int i = 0; i < n; ++i) {
    S* row = p.data() + static_cast<std::int64_t>(i) * c;
    S mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < c; ++j) row[j] /= sum;
  }
  return p;
}

// Mean cross entropy over rows whose label is >= 0; rows with negative
// labels contribute nothing to loss or gradient. When dlogits is non-null,
// grad_scale * d(mean loss)/d(logits) is ACCUMULATED into it.
template <typename S>
S softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels, S grad_scale,
                        Tensor<S>* dlogits) {
  require(logits.rank() == 2, ErrorKind::shape, "cross entropy expects (N,C)");
  require(labels.size() == static_cast<std::size_t>(logits.dim(0)), ErrorKind::shape,
          "cross entropy label count mismatch");
  const int n = logits.dim(0);
  const int c = logits.dim(1);
  int counted = 0;
  for (int label : labels) {
    require(label < c, ErrorKind::input, "cross entropy label out of range");
    if (label >= 0) ++counted;
  }
  if (counted == 0) return S(0);
  if (dlogits)
    require(dlogits->same_shape(logits), ErrorKind::shape, "cross entropy dlogits shape mismatch");

  Tensor<S> p = softmax_rows(logits);
  double loss = 0.0;
  const S inv = grad_scale / static_cast<S>(counted);
  for (int i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0) continue;
    const S* prow = p.data() + static_cast<std::int64_t>(i) * c;
    loss -= std::log(std::max(static_cast<double>(prow[label]), 1e-300));
    if (dlogits) {
      S* grow = dlogits->data() + static_cast<std::int64_t>(i) * c;
      for (int j = 0; j < c; ++j) grow[j] += inv * (prow[j] - (j == label ? S(1) : S(0)));
    }
  }
  return static_cast<S>(loss / counted);
}

// Per-element binary cross entropy on raw logits, weighted and divided by
// `normalizer`. Stable form; gradient accumulated as for cross entropy.
template <typename S>
S bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets, const Tensor<S>& weights,
                  S normalizer, S grad_scale, Tensor<S>* dlogits) {
  require(logits.same_shape(targets) && logits.same_shape(weights), ErrorKind::shape,
          "bce operand shape mismatch");
  require(normalizer > S(0), ErrorKind::input, "bce normalizer must be positive");
  if (dlogits)
    require(dlogits->same_shape(logits), ErrorKind::shape, "bce dlogits shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const S wgt = weights[i];
    if (wgt == S(0)) continue;
    const double z = static_cast<double>(logits[i]);
    const double t = static_cast<double>(targets[i]);
    loss += wgt * (std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z))));
    if (dlogits) {
      const double sig = 1.0 / (1.0 + std::exp(-z));
      (*dlogits)[i] += grad_scale * static_cast<S>(wgt * (sig - t)) / normalizer;
    }
  }
  return static_cast<S>(loss) / normalizer;
}

// Smooth L1 (beta = 1) summed over the last axis, weighted per row and
// divided by `normalizer`. pred/target are (N,D), row_weights (N).
template <typename S>
S smooth_l1(const Tensor<S>& pred, const Tensor<S>& target, const Tensor<S>& row_weights,
            S normalizer, S grad_scale, Tensor<S>* dpred) {
  require(pred.rank() == 2 && pred.same_shape(target), ErrorKind::shape,
          "smooth l1 operand shape mismatch");
  require(row_weights.numel() == static_cast<std::size_t>(pred.dim(0)), ErrorKind::shape,
          "smooth l1 weight count mismatch");
  require(normalizer > S(0), ErrorKind::input, "smooth l1 normalizer must be positive");
  if (dpred) require(dpred->same_shape(pred), ErrorKind::shape, "smooth l1 dpred shape mismatch");
  const int n = pred.dim(0);
  const int d = pred.dim(1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const S wgt = row_weights[static_cast<std::size_t>(i)];
    if (wgt == S(0)) continue;
    for (int j = 0; j < d; ++j) {
      const S diff = pred.at(i, j) - target.at(i, j);
      const S ad = std::abs(diff);
      loss += wgt * (ad < S(1) ? S(0.5) * diff * diff : ad - S(0.5));
      if (dpred) {
        const S g = ad < S(1) ? diff : (diff > S(0) ? S(1) : S(-1));
        dpred->at(i, j) += grad_scale * wgt * g / normalizer;
      }
    }
  }
  return static_cast<S>(loss) / normalizer;
}

template <typename S>
S sigmoid(S z) {
  return S(1) / (S(1) + std::exp(-z));
}

// Concatenation of rank-1 tensors.
template <typename S>
Tensor<S> concat_vec(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.rank() == 1 && b.rank() == 1, ErrorKind::shape, "concat_vec expects rank-1 inputs");
  Tensor<S> out({a.dim(0) + b.dim(0)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

}  // namespace bspg
