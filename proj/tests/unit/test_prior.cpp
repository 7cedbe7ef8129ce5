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

#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "bspg/prior_guidance.hpp"
#include "test_support.hpp"

using namespace bspg;
using namespace bspg::test;

TEST_CASE("strategy names round-trip and classify") {
  for (const char* name : {"mult-roi", "mult-rpn", "cat-roi", "cat-rpn"}) {
    GuidanceStrategy s = parse_guidance(name);
    CHECK(to_string(s) == name);
  }
  CHECK_THROWS_AS(parse_guidance("bogus"), Error);
  CHECK(guidance_at_rpn(GuidanceStrategy::mult_rpn));
  CHECK(!guidance_at_rpn(GuidanceStrategy::mult_roi));
  CHECK(guidance_is_mult(GuidanceStrategy::mult_roi));
  CHECK(!guidance_is_mult(GuidanceStrategy::cat_rpn));
}

TEST_CASE("relation_map equals the normalized dot-product oracle") {
  Rng rng(51);
  for (int trial = 0; trial < 60; ++trial) {
    const int c = rng.range(2, 5), ht = rng.range(1, 4), wt = rng.range(1, 4);
    const int hq = rng.range(1, 3), wq = rng.range(1, 3);
    Tensor<double> t = random_tensor<double>(rng, {c, ht, wt});
    Tensor<double> q = random_tensor<double>(rng, {c, hq, wq});
    Tensor<double> r = relation_map(t, q);
    REQUIRE(r.dim(0) == ht * wt);
    REQUIRE(r.dim(1) == hq * wq);

    for (int i = 0; i < ht * wt; ++i)
      for (int j = 0; j < hq * wq; ++j) {
        double dot = 0, nt = 0, nq = 0;
        for (int ch = 0; ch < c; ++ch) {
          const double tv = t.at(ch, i / wt, i % wt);
          const double qv = q.at(ch, j / wq, j % wq);
          dot += tv * qv;
          nt += tv * tv;
          nq += qv * qv;
        }
        const double ref = (nt == 0 || nq == 0) ? 0 : dot / (std::sqrt(nt) * std::sqrt(nq));
        CHECK(rel_err(r.at(i, j), ref) < 1e-9);
      }
  }
}

TEST_CASE("relation_map entries are cosines in [-1, 1]") {
  Rng rng(52);
  Tensor<double> t = random_tensor<double>(rng, {8, 4, 4});
  Tensor<double> q = random_tensor<double>(rng, {8, 2, 2});
  Tensor<double> r = relation_map(t, q);
  for (std::size_t i = 0; i < r.numel(); ++i) {
    CHECK(r[i] <= 1.0 + 1e-9);
    CHECK(r[i] >= -1.0 - 1e-9);
  }
}

TEST_CASE("prior_from_relation takes the row max") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const int nt = rng.range(1, 10), nq = rng.range(1, 10);
    Tensor<double> r = random_tensor<double>(rng, {nt, nq});
    Tensor<double> p = prior_from_relation(r);
    REQUIRE(p.numel() == static_cast<std::size_t>(nt));
    for (int i = 0; i < nt; ++i) {
      double mx = r.at(i, 0);
      for (int j = 1; j < nq; ++j) mx = std::max(mx, r.at(i, j));
      CHECK(p[static_cast<std::size_t>(i)] == mx);
    }
  }
}

TEST_CASE("normalize maps extremes to 0 and 1") {
  Tensor<double> raw({4});
  raw[0] = 2;
  raw[1] = 4;
  raw[2] = 3;
  raw[3] = 2;
  Tensor<double> out = normalize_and_resize(raw, 2, 2, 2, 2);
  double lo = out[0], hi = out[0];
  for (std::size_t i = 1; i < out.numel(); ++i) {
    lo = std::min(lo, out[i]);
    hi = std::max(hi, out[i]);
  }
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));
}

TEST_CASE("flat priors become all ones, not zeros") {
  Tensor<double> raw = Tensor<double>::full({9}, 0.37);
  Tensor<double> out = normalize_and_resize(raw, 3, 3, 6, 6);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 1.0);
}

TEST_CASE("normalization is invariant to increasing affine transforms") {
  Rng rng(54);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor<double> raw = random_tensor<double>(rng, {12});
    Tensor<double> scaled = raw;
    const double a = rng.uniform(0.5, 4.0);
    const double b = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < scaled.numel(); ++i) scaled[i] = a * scaled[i] + b;
    Tensor<double> n1 = normalize_and_resize(raw, 3, 4, 5, 7);
    Tensor<double> n2 = normalize_and_resize(scaled, 3, 4, 5, 7);
    for (std::size_t i = 0; i < n1.numel(); ++i) CHECK(rel_err(n1[i], n2[i]) < 1e-9);
  }
}

TEST_CASE("resize_map identity at equal size and bilinear midpoints") {
  Rng rng(55);
  Tensor<double> m = random_tensor<double>(rng, {3, 3});
  Tensor<double> same = resize_map(m, 3, 3);
  for (std::size_t i = 0; i < m.numel(); ++i) CHECK(same[i] == m[i]);

  // Doubling a 2-wide row: outer samples clamp to the nearest cell, inner
  // samples sit a quarter cell from each center.
  Tensor<double> row({1, 2});
  row[0] = 0;
  row[1] = 1;
  Tensor<double> up = resize_map(row, 1, 4);
  CHECK(up[0] == doctest::Approx(0.0));
  CHECK(up[1] == doctest::Approx(0.25));
  CHECK(up[2] == doctest::Approx(0.75));
  CHECK(up[3] == doctest::Approx(1.0));
}

TEST_CASE("apply_prior_mult is a broadcast multiply with constant prior") {
  Rng rng(56);
  for (int trial = 0; trial < 40; ++trial) {
    const int c = rng.range(1, 4), h = rng.range(1, 5), w = rng.range(1, 5);
    Tensor<double> x = random_tensor<double>(rng, {c, h, w});
    Tensor<double> prior = random_tensor<double>(rng, {h, w}, 0.0, 1.0);
    Tensor<double> y = apply_prior_mult(x, prior);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          CHECK(y.at(ch, i, j) == x.at(ch, i, j) * prior.at(i, j));

    Tensor<double> dy = random_tensor<double>(rng, {c, h, w});
    Tensor<double> dx = apply_prior_mult_backward(dy, prior);
    auto loss = [&] {
      Tensor<double> out = apply_prior_mult(x, prior);
      double acc = 0;
      for (std::size_t i = 0; i < out.numel(); ++i) acc += out[i] * dy[i];
      return acc;
    };
    CHECK(max_grad_rel_err(x, dx, loss) < 1e-7);
  }
}

TEST_CASE("zero prior annihilates under mult") {
  Rng rng(57);
  Tensor<double> x = random_tensor<double>(rng, {2, 3, 3});
  Tensor<double> zeros({3, 3});
  Tensor<double> y = apply_prior_mult(x, zeros);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("concat/strip prior channel round-trip") {
  Rng rng(58);
  Tensor<double> x = random_tensor<double>(rng, {3, 4, 4});
  Tensor<double> prior = random_tensor<double>(rng, {4, 4});
  Tensor<double> cat = concat_prior_channel(x, prior);
  REQUIRE(cat.dim(0) == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(cat.at(3, i, j) == prior.at(i, j));

  Tensor<double> dcat = random_tensor<double>(rng, {4, 4, 4});
  Tensor<double> dx = strip_prior_channel(dcat);
  REQUIRE(dx.dim(0) == 3);
  for (int ch = 0; ch < 3; ++ch)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(dx.at(ch, i, j) == dcat.at(ch, i, j));
}
