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

#include <set>

#include "doctest.h"

#include "bspg/errors.hpp"
#include "bspg/rng.hpp"
#include "bspg/tensor.hpp"

using namespace bspg;

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.f);

  t.at(1, 2) = 5.f;
  CHECK(t[5] == 5.f);

  Tensor<float> r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r[5] == 5.f);
  CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
}

TEST_CASE("tensor row-major layout") {
  Tensor<float> t({2, 2, 3});
  float v = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 3; ++k) t.at(i, j, k) = v++;
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == static_cast<float>(i));
}

TEST_CASE("tensor ops") {
  Tensor<float> a = Tensor<float>::full({4}, 2.f);
  Tensor<float> b = Tensor<float>::ones({4});
  a += b;
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == 3.f);
  a *= 0.5f;
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == 1.5f);
  CHECK(a.all_finite());
  a[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK(!a.all_finite());
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());

  Rng s0(7, 0), s1(7, 1);
  bool differs = false;
  for (int i = 0; i < 16; ++i)
    if (s0.bits() != s1.bits()) differs = true;
  CHECK(differs);
}

TEST_CASE("rng uniform and below stay in range") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto n = rng.below(7);
    CHECK(n < 7);
  }
}

TEST_CASE("rng below hits every residue") {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 500; ++i) seen.insert(rng.below(5));
  CHECK(seen.size() == 5);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> w = v;
  Rng a(9), b(9);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 8);
}

TEST_CASE("stream_seed spreads nearby inputs") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 64; ++s)
    for (std::uint64_t t = 0; t < 4; ++t) seeds.insert(stream_seed(s, t));
  CHECK(seeds.size() == 256);
}
