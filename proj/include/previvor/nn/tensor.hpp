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

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace previvor::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s) noexcept;
std::string shape_str(const Shape& s);

// One value in the recorded computation. Leaves are parameters or inputs;
// interior nodes carry a closure that pushes their gradient to `parents`.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<double> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<const double> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Reverse-mode pass from this scalar. Leaf gradients accumulate across
  // calls; interior gradients are recomputed each time.
  void backward() const;

  // Same values, cut from the graph.
  Tensor detach() const;
  // Independent copy of the values (leaf, no gradient).
  Tensor clone() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// For op implementations: wraps `value` in a node that records `parents`
// and `backward` when any parent needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

// Named parameter list; order is the serialization order.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

void zero_grads(const ParamList& params);
void set_requires_grad(const ParamList& params, bool on);
// FNV-1a over all parameter bytes.
std::uint64_t checksum(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace previvor::nn
