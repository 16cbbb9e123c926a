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
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/nn/tensor.hpp"

namespace previvor::nn {

// Step decay at fixed iteration milestones.
struct LrSchedule {
  double initial = 1e-4;
  double decay_factor = 0.5;
  std::vector<std::int64_t> milestones{4000, 8000, 12000, 16000, 20000};

  void validate() const;
  double lr_at(std::int64_t step) const;
  nlohmann::json to_json() const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double eps = 1e-8;

  nlohmann::json to_json() const;
};

// AdamW with bias correction and decoupled weight decay. Moments are kept
// per parameter in registration order.
class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg = {});

  // Applies one update using the current gradients at lr = schedule(step_count).
  // Throws StateError when a parameter has no gradient buffer.
  void step(const LrSchedule& schedule);
  void zero_grad() const { zero_grads(params_); }

  std::int64_t step_count() const noexcept { return step_count_; }
  const AdamWConfig& config() const noexcept { return cfg_; }
  const ParamList& params() const noexcept { return params_; }

  // Moments as named tensors ("<name>.m", "<name>.v") for checkpointing.
  ParamList state_tensors() const;
  void restore(std::int64_t step_count, const ParamList& state);

 private:
  ParamList params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_count_ = 0;
};

}  // namespace previvor::nn
