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

#include "previvor/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "previvor/errors.hpp"

namespace previvor::nn {

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("LrSchedule: initial learning rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ConfigError("LrSchedule: decay_factor outside (0, 1)");
  if (!std::is_sorted(milestones.begin(), milestones.end()) ||
      std::adjacent_find(milestones.begin(), milestones.end()) != milestones.end()) {
    throw ConfigError("LrSchedule: milestones must be strictly ascending");
  }
}

double LrSchedule::lr_at(std::int64_t step) const {
  double lr = initial;
  for (auto m : milestones) {
    if (step >= m) lr *= decay_factor;
  }
  return lr;
}

nlohmann::json LrSchedule::to_json() const {
  return {{"initial", initial}, {"decay_factor", decay_factor}, {"milestones", milestones}};
}

nlohmann::json AdamWConfig::to_json() const {
  return {{"beta1", beta1}, {"beta2", beta2}, {"weight_decay", weight_decay}, {"eps", eps}};
}

AdamW::AdamW(ParamList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(const LrSchedule& schedule) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw StateError("AdamW::step: parameter '" + p.name + "' has no gradient");
  }
  const double lr = schedule.lr_at(step_count_);
  const auto t = static_cast<double>(step_count_ + 1);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor w = params_[i].tensor;
    auto val = w.data();
    auto g = w.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      val[j] -= lr * cfg_.weight_decay * val[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      val[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
  ++step_count_;
}

ParamList AdamW::state_tensors() const {
  ParamList out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i].name + ".m", Tensor::from(params_[i].tensor.shape(), m_[i])});
    out.push_back({params_[i].name + ".v", Tensor::from(params_[i].tensor.shape(), v_[i])});
  }
  return out;
}

void AdamW::restore(std::int64_t step_count, const ParamList& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : state) by_name[s.name] = &s.tensor;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (auto [suffix, dst] : {std::pair{".m", &m_[i]}, std::pair{".v", &v_[i]}}) {
      auto it = by_name.find(params_[i].name + suffix);
      if (it == by_name.end()) throw StateError("AdamW::restore: missing moment " + params_[i].name + suffix);
      if (it->second->numel() != dst->size()) throw StateError("AdamW::restore: size mismatch for " + it->first);
      dst->assign(it->second->data().begin(), it->second->data().end());
    }
  }
  step_count_ = step_count;
}

}  // namespace previvor::nn
