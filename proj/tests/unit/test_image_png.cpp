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

#include <cstdio>
#include <string>

#include "bspg/errors.hpp"
#include "bspg/image.hpp"
#include "bspg/png_io.hpp"
#include "bspg/rng.hpp"
#include "doctest.h"

using namespace bspg;

namespace {

Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("png write/read round-trips every byte") {
  Rng rng(42);
  for (int trial = 0; trial < 4; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(40));
    const int h = 1 + static_cast<int>(rng.below(40));
    Image img = random_image(rng, w, h);
    const std::string path = "test_png_rt.png";
    write_png(path, img);
    Image back = read_png(path);
    CHECK(back == img);
    std::remove(path.c_str());
  }
}

TEST_CASE("png read failures are io errors") {
  CHECK_THROWS_AS(read_png("no_such_image.png"), Error);
  const std::string path = "test_png_bogus.png";
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("not a png at all", f);
  std::fclose(f);
  try {
    read_png(path);
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
  std::remove(path.c_str());
}

TEST_CASE("crop keeps exact pixels") {
  Rng rng(7);
  Image img = random_image(rng, 16, 12);
  Image c = crop(img, 3, 2, 9, 8);
  CHECK(c.width == 6);
  CHECK(c.height == 6);
  for (int y = 0; y < c.height; ++y)
    for (int x = 0; x < c.width; ++x)
      for (int ch = 0; ch < 3; ++ch) CHECK(c.px(x, y)[ch] == img.px(x + 3, y + 2)[ch]);
  CHECK_THROWS_AS(crop(img, -1, 0, 4, 4), Error);
  CHECK_THROWS_AS(crop(img, 0, 0, 17, 4), Error);
  CHECK_THROWS_AS(crop(img, 5, 5, 5, 9), Error);  // empty rect
}

TEST_CASE("resize at the same size is the identity") {
  Rng rng(9);
  Image img = random_image(rng, 13, 11);
  CHECK(resize_bilinear(img, 13, 11) == img);
}

TEST_CASE("resize of a constant image stays constant") {
  Image img(8, 8);
  for (auto& b : img.pixels) b = 77;
  Image out = resize_bilinear(img, 21, 5);
  for (auto b : out.pixels) CHECK(b == 77);
}

TEST_CASE("2x upscale lands on the half-pixel grid") {
  // 1x2 image, gray levels 0 and 100. Destination x=0..3 map to source
  // x = (dst+0.5)*0.5-0.5 = -0.25, 0.25, 0.75, 1.25; clamped interpolation
  // gives 0, 25, 75, 100.
  Image img(2, 1);
  img.px(0, 0)[0] = img.px(0, 0)[1] = img.px(0, 0)[2] = 0;
  img.px(1, 0)[0] = img.px(1, 0)[1] = img.px(1, 0)[2] = 100;
  Image out = resize_bilinear(img, 4, 1);
  CHECK(out.px(0, 0)[0] == 0);
  CHECK(out.px(1, 0)[0] == 25);
  CHECK(out.px(2, 0)[0] == 75);
  CHECK(out.px(3, 0)[0] == 100);
}

TEST_CASE("image_to_tensor is planar and scaled to [0,1]") {
  Image img(2, 2);
  img.px(0, 0)[0] = 255;  // red at (0,0)
  img.px(1, 1)[2] = 51;   // blue 0.2 at (1,1)
  Tensor<double> t = image_to_tensor<double>(img);
  REQUIRE(t.rank() == 3);
  CHECK(t.dim(0) == 3);
  CHECK(t.dim(1) == 2);
  CHECK(t.dim(2) == 2);
  CHECK(t.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(t.at(2, 1, 1) == doctest::Approx(0.2));
  CHECK(t.at(1, 0, 0) == 0.0);
}

TEST_CASE("gray_to_image clamps and rounds") {
  Tensor<float> map({1, 4});
  map[0] = -0.5f;
  map[1] = 0.0f;
  map[2] = 0.5f;
  map[3] = 1.5f;
  Image img = gray_to_image(map);
  CHECK(img.px(0, 0)[0] == 0);
  CHECK(img.px(1, 0)[0] == 0);
  CHECK(img.px(2, 0)[0] == 128);  // 0.5*255+0.5 rounds up
  CHECK(img.px(3, 0)[0] == 255);
  // Grayscale means equal channels.
  CHECK(img.px(2, 0)[1] == img.px(2, 0)[0]);
  CHECK(img.px(2, 0)[2] == img.px(2, 0)[0]);
}

TEST_CASE("canvas quantization clamps to [0,1]") {
  Canvas c(2, 1, {0.5f, 0.5f, 0.5f});
  c.set(0, 0, {-1.0f, 0.25f, 2.0f});
  Image img = c.quantize();
  CHECK(img.px(0, 0)[0] == 0);
  CHECK(img.px(0, 0)[1] == 64);
  CHECK(img.px(0, 0)[2] == 255);
  CHECK(img.px(1, 0)[0] == 128);
}
