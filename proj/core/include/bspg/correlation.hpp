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
#include <utility>
#include <vector>

#include "bspg/errors.hpp"
#include "bspg/nn.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

// Cross-attention from every target position over all query positions
// (embedded-Gaussian non-local), added residually to the target map. The
// output projection starts at zero, so the block is an identity at
// initialization.
template <typename S>
class NonLocalBlock {
 public:
  Conv2d<S> theta;  // target -> embedding
  Conv2d<S> phi;    // query -> embedding
  Conv2d<S> g;      // query -> value
  Conv2d<S> out;    // embedding -> channels, zero-init

  struct Cache {
    typename Conv2d<S>::Cache theta_c, phi_c, g_c, out_c;
    Tensor<S> t, p, gq;  // projected maps
    Tensor<S> attn;      // (target positions, query positions)
  };

  NonLocalBlock() = default;
  NonLocalBlock(int channels, int embed, Rng& rng)
      : theta(channels, embed, 1, 1, 0, rng),
        phi(channels, embed, 1, 1, 0, rng),
        g(channels, embed, 1, 1, 0, rng),
        out(embed, channels, 1, 1, 0, rng) {
    out.w.value.zero();
    out.b.value.zero();
  }

  int channels() const { return theta.in_channels(); }
  int embed_dim() const { return theta.out_channels(); }

  void collect_params(std::vector<Param<S>*>& into) {
    for (Conv2d<S>* conv : {&theta, &phi, &g, &out}) {
      into.push_back(&conv->w);
      into.push_back(&conv->b);
    }
  }

  Tensor<S> forward(const Tensor<S>& target, const Tensor<S>& query, Cache* cache = nullptr) const {
    require(target.rank() == 3 && query.rank() == 3, ErrorKind::shape,
            "nonlocal expects (C,H,W) inputs");
    require(target.dim(0) == channels() && query.dim(0) == channels(), ErrorKind::shape,
            "nonlocal channel mismatch");
    const int e = embed_dim();
    const int nt = target.dim(1) * target.dim(2);
    const int nq = query.dim(1) * query.dim(2);

    Tensor<S> t = theta.forward(target, cache ? &cache->theta_c : nullptr);
    Tensor<S> p = phi.forward(query, cache ? &cache->phi_c : nullptr);
    Tensor<S> gq = g.forward(query, cache ? &cache->g_c : nullptr);

    Tensor<S> logits({nt, nq});
    logits.mat(nt, nq).noalias() = t.mat(e, nt).transpose() * p.mat(e, nq);
    Tensor<S> attn = softmax_rows(logits);

    Tensor<S> y({e, target.dim(1), target.dim(2)});
    y.mat(e, nt).noalias() = gq.mat(e, nq) * attn.mat(nt, nq).transpose();

    Tensor<S> z = out.forward(y, cache ? &cache->out_c : nullptr);
    Tensor<S> result = target;
    result += z;

    if (cache) {
      cache->t = std::move(t);
      cache->p = std::move(p);
      cache->gq = std::move(gq);
      cache->attn = std::move(attn);
    }
    return result;
  }

  // Returns (dtarget, dquery); parameter gradients accumulate in place.
  std::pair<Tensor<S>, Tensor<S>> backward(Cache& cache, const Tensor<S>& dy) {
    const Tensor<S>& target = cache.theta_c.input;
    const Tensor<S>& query = cache.phi_c.input;
    require(!target.empty() && !query.empty(), ErrorKind::state,
            "nonlocal backward without forward cache");
    require(dy.same_shape(target), ErrorKind::shape, "nonlocal backward dy shape mismatch");
    const int e = embed_dim();
    const int nt = target.dim(1) * target.dim(2);
    const int nq = query.dim(1) * query.dim(2);

    Tensor<S> dtarget = dy;
    Tensor<S> dyy = out.backward(cache.out_c, dy);  // (E,Ht,Wt)

    Tensor<S> dg({e, query.dim(1), query.dim(2)});
    dg.mat(e, nq).noalias() = dyy.mat(e, nt) * cache.attn.mat(nt, nq);

    Tensor<S> dattn({nt, nq});
    dattn.mat(nt, nq).noalias() = dyy.mat(e, nt).transpose() * cache.gq.mat(e, nq);

    // Softmax backward per target row.
    Tensor<S> dlogits({nt, nq});
    for (int i = 0; i < nt; ++i) {
      const S* a = cache.attn.data() + static_cast<std::size_t>(i) * nq;
      const S* da = dattn.data() + static_cast<std::size_t>(i) * nq;
      S dot = S(0);
      for (int j = 0; j < nq; ++j) dot += a[j] * da[j];
      S* dl = dlogits.data() + static_cast<std::size_t>(i) * nq;
      for (int j = 0; j < nq; ++j) dl[j] = a[j] * (da[j] - dot);
    }

    Tensor<S> dt({e, target.dim(1), target.dim(2)});
    dt.mat(e, nt).noalias() = cache.p.mat(e, nq) * dlogits.mat(nt, nq).transpose();
    Tensor<S> dp({e, query.dim(1), query.dim(2)});
    dp.mat(e, nq).noalias() = cache.t.mat(e, nt) * dlogits.mat(nt, nq);

    dtarget += theta.backward(cache.theta_c, dt);
    Tensor<S> dquery = phi.backward(cache.phi_c, dp);
    dquery += g.backward(cache.g_c, dg);
    return {std::move(dtarget), std::move(dquery)};
  }
};

// Elementwise mean of same-shaped features.
template <typename S>
Tensor<S> average_queries(const std::vector<Tensor<S>>& queries) {
  require(!queries.empty(), ErrorKind::input, "average_queries: empty list");
  Tensor<S> mean = queries[0];
  for (std::size_t i = 1; i < queries.size(); ++i) {
    require(mean.same_shape(queries[i]), ErrorKind::shape, "average_queries shape mismatch");
    mean += queries[i];
  }
  mean *= S(1) / static_cast<S>(queries.size());
  return mean;
}

// Pooled-concat plus depth-wise correlation of one proposal feature with the
// query feature. With equal shapes the correlation is (C,1,1); the general
// form slides the query over the proposal with no padding.
template <typename S>
struct AggregatedPair {
  Tensor<S> concat;  // (2C): GAP(p) followed by GAP(q)
  Tensor<S> corr;    // (C, ph - qh + 1, pw - qw + 1)
};

template <typename S>
AggregatedPair<S> aggregate_pair(const Tensor<S>& p, const Tensor<S>& q) {
  require(p.rank() == 3 && q.rank() == 3, ErrorKind::shape, "aggregate_pair expects (C,H,W)");
  require(p.dim(0) == q.dim(0), ErrorKind::shape, "aggregate_pair channel mismatch");
  require(p.dim(1) >= q.dim(1) && p.dim(2) >= q.dim(2), ErrorKind::shape,
          "aggregate_pair: query larger than proposal");
  const int c = p.dim(0);
  const int oh = p.dim(1) - q.dim(1) + 1;
  const int ow = p.dim(2) - q.dim(2) + 1;
  AggregatedPair<S> out;
  out.concat = concat_vec(global_avg_pool(p), global_avg_pool(q));
  out.corr = Tensor<S>({c, oh, ow});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        S acc = S(0);
        for (int ky = 0; ky < q.dim(1); ++ky)
          for (int kx = 0; kx < q.dim(2); ++kx)
            acc += p.at(ch, y + ky, x + kx) * q.at(ch, ky, kx);
        out.corr.at(ch, y, x) = acc;
      }
  return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> aggregate_pair_backward(const Tensor<S>& p, const Tensor<S>& q,
                                                        const Tensor<S>& dconcat,
                                                        const Tensor<S>& dcorr) {
  const int c = p.dim(0);
  require(dconcat.numel() == static_cast<std::size_t>(2 * c), ErrorKind::shape,
          "aggregate_pair backward dconcat shape mismatch");
  const int oh = p.dim(1) - q.dim(1) + 1;
  const int ow = p.dim(2) - q.dim(2) + 1;
  require(dcorr.rank() == 3 && dcorr.dim(0) == c && dcorr.dim(1) == oh && dcorr.dim(2) == ow,
          ErrorKind::shape, "aggregate_pair backward dcorr shape mismatch");

  Tensor<S> dgap_p({c});
  Tensor<S> dgap_q({c});
  std::copy(dconcat.data(), dconcat.data() + c, dgap_p.data());
  std::copy(dconcat.data() + c, dconcat.data() + 2 * c, dgap_q.data());
  Tensor<S> dp = global_avg_pool_backward(dgap_p, p.shape());
  Tensor<S> dq = global_avg_pool_backward(dgap_q, q.shape());

  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const S gy = dcorr.at(ch, y, x);
        if (gy == S(0)) continue;
        for (int ky = 0; ky < q.dim(1); ++ky)
          for (int kx = 0; kx < q.dim(2); ++kx) {
            dp.at(ch, y + ky, x + kx) += gy * q.at(ch, ky, kx);
            dq.at(ch, ky, kx) += gy * p.at(ch, y + ky, x + kx);
          }
      }
  return {std::move(dp), std::move(dq)};
}

template <typename S>
S cosine_of(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.numel() == b.numel(), ErrorKind::shape, "cosine length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return S(0);
  return static_cast<S>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

// Cosine between GAP of each proposal feature and GAP of the query feature;
// zero-norm vectors give similarity 0. Not part of the gradient path.
template <typename S>
Tensor<S> similarity_map(const Tensor<S>& p_batch, const Tensor<S>& q) {
  require(p_batch.rank() == 4 && q.rank() == 3, ErrorKind::shape,
          "similarity_map expects (K,C,H,W) proposals and a (C,H,W) query");
  require(p_batch.dim(1) == q.dim(0), ErrorKind::shape, "similarity_map channel mismatch");
  const int k = p_batch.dim(0);
  const int c = p_batch.dim(1);
  Tensor<S> gap_p = global_avg_pool(p_batch);  // (K,C)
  Tensor<S> gap_q = global_avg_pool(q);        // (C)
  Tensor<S> m({k});
  for (int i = 0; i < k; ++i) {
    Tensor<S> row({c});
    std::copy(gap_p.data() + static_cast<std::size_t>(i) * c,
              gap_p.data() + static_cast<std::size_t>(i + 1) * c, row.data());
    m[static_cast<std::size_t>(i)] = cosine_of(row, gap_q);
  }
  return m;
}

}  // namespace bspg
