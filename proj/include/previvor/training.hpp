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

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/image.hpp"
#include "previvor/nn/tensor.hpp"
#include "previvor/rng.hpp"

namespace previvor {

// One logged training iteration. `terms` holds the weighted generator terms,
// `total` their sum, `disc` the discriminator objective of the same step.
struct IterationLog {
  std::string phase;
  std::int64_t iteration = 0;
  double lr = 0.0;
  std::map<std::string, double> terms;
  double total = 0.0;
  double disc = 0.0;

  nlohmann::json to_json() const;
};

using LogSink = std::function<void(const IterationLog&)>;

// Throws StateError naming the phase, iteration and offending terms when any
// logged value is not finite.
void require_finite(const IterationLog& log);

// Stacks planes into an [N, 1, H, W] tensor, mapping [lo, hi] onto [-1, 1].
nn::Tensor planes_to_tensor(const std::vector<const Plane*>& planes, double lo, double hi);

// Inverse of planes_to_tensor for item `n` of channel `c`.
Plane tensor_to_plane(const nn::Tensor& t, std::size_t n, std::size_t c, double lo, double hi);

// Random crop of `size` x `size` (whole plane when it already matches) with an
// optional horizontal flip; the same draw applied to every plane in `group`.
std::vector<Plane> random_crop_group(const std::vector<const Plane*>& group, int size, bool allow_flip, Rng& rng);

// Indices of exactly ceil(n/2) items from one pool and floor(n/2) from the
// other in shuffled order; which pool gets the larger half is a fair coin.
// Result pairs are (pool, index-in-pool) with pool 0 or 1.
std::vector<std::pair<int, std::size_t>> balanced_draw(std::size_t n, std::size_t pool0, std::size_t pool1, Rng& rng);

}  // namespace previvor
