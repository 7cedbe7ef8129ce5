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

#include <string>
#include <vector>

#include "bspg/image.hpp"

namespace bspg {

// Minimal line chart: axes, ticks with numeric labels (built-in 3x5 glyph
// set: digits, dot, minus), one polyline with dot markers per series.
// Intended for sweep/ablation plots; the numeric data always ships in a
// sidecar file, the image is a convenience rendering.
struct ChartSeries {
  std::vector<double> xs, ys;
  Rgb color = {0.20f, 0.45f, 0.85f};
};

Image render_line_chart(const std::vector<ChartSeries>& series, int width = 520,
                        int height = 360);

void write_line_chart(const std::string& path, const std::vector<ChartSeries>& series,
                      int width = 520, int height = 360);

}  // namespace bspg
