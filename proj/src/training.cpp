// Copyright 2026 The previvor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "previvor/training.hpp"

#include <cmath>

#include "previvor/errors.hpp"

namespace previvor {

nlohmann::json IterationLog::to_json() const {
  nlohmann::json j;
  j["phase"] = phase;
  j["iteration"] = iteration;
  j["lr"] = lr;
  for (const auto& [k, v] : terms) j[k] = v;
  j["total"] = total;
  j["disc"] = disc;
  return j;
}

void require_finite(const IterationLog& log) {
  std::string bad;
  for (const auto& [k, v] : log.terms) {
    if (!std::isfinite(v)) bad += " " + k + "=" + std::to_string(v);
  }
  if (!std::isfinite(log.total)) bad += " total=" + std::to_string(log.total);
  if (!std::isfinite(log.disc)) bad += " disc=" + std::to_string(log.disc);
  if (!bad.empty()) {
    throw StateError("non-finite loss in phase " + log.phase + " at iteration " + std::to_string(log.iteration) +
                     ":" + bad);
  }
}

nn::Tensor planes_to_tensor(const std::vector<const Plane*>& planes, double lo, double hi) {
  if (planes.empty()) throw EmptyInputError("planes_to_tensor: no planes");
  const int rows = planes[0]->rows(), cols = planes[0]->cols();
  const std::size_t hw = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<double> v;
  v.reserve(planes.size() * hw);
  const double s = 2.0 / (hi - lo);
  for (const Plane* p : planes) {
    if (p->rows() != rows || p->cols() != cols) throw DimensionError("planes_to_tensor: mixed plane sizes");
    for (double x : p->values()) v.push_back((x - lo) * s - 1.0);
  }
  return nn::Tensor::from({planes.size(), 1, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)},
                          std::move(v));
}

Plane tensor_to_plane(const nn::Tensor& t, std::size_t n, std::size_t c, double lo, double hi) {
  const auto H = t.dim(2), W = t.dim(3);
  Plane out(static_cast<int>(H), static_cast<int>(W));
  const auto src = t.data().subspan((n * t.dim(1) + c) * H * W, H * W);
  auto dst = out.values();
  const double s = 0.5 * (hi - lo);
  for (std::size_t i = 0; i < H * W; ++i) dst[i] = (src[i] + 1.0) * s + lo;
  return out;
}

std::vector<Plane> random_crop_group(const std::vector<const Plane*>& group, int size, bool allow_flip, Rng& rng) {
  const int rows = group.at(0)->rows(), cols = group.at(0)->cols();
  if (rows < size || cols < size) {
    throw DimensionError("training image " + std::to_string(cols) + "x" + std::to_string(rows) +
                         " is smaller than the training resolution " + std::to_string(size));
  }
  const int r0 = rows == size ? 0 : static_cast<int>(rng.index(static_cast<std::size_t>(rows - size + 1)));
  const int c0 = cols == size ? 0 : static_cast<int>(rng.index(static_cast<std::size_t>(cols - size + 1)));
  const bool flip = allow_flip && rng.bernoulli(0.5);
  std::vector<Plane> out;
  for (const Plane* p : group) {
    if (p->rows() != rows || p->cols() != cols) throw DimensionError("random_crop_group: mixed plane sizes");
    Plane crop(size, size);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) crop(r, c) = (*p)(r0 + r, c0 + (flip ? size - 1 - c : c));
    }
    out.push_back(std::move(crop));
  }
  return out;
}

std::vector<std::pair<int, std::size_t>> balanced_draw(std::size_t n, std::size_t pool0, std::size_t pool1,
                                                       Rng& rng) {
  if (pool0 == 0 || pool1 == 0) throw EmptyInputError("balanced_draw: empty pool");
  const int big = rng.bernoulli(0.5) ? 1 : 0;
  std::vector<std::pair<int, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int pool = i < (n + 1) / 2 ? big : 1 - big;
    out.emplace_back(pool, rng.index(pool == 0 ? pool0 : pool1));
  }
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.index(i)]);
  return out;
}

}  // namespace previvor
