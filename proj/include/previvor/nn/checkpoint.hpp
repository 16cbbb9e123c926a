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

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "previvor/nn/tensor.hpp"

namespace previvor::nn {

// Single-file checkpoint:
//   8-byte magic "PRVCKPT1"
//   uint64 little-endian header length
//   UTF-8 JSON header {"format":1, "meta":{...}, "arrays":[{name, shape, offset, count}]}
//   float64 little-endian payload, arrays back to back
class Archive {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void put(const std::string& name, const Tensor& t);
  void put_all(const ParamList& params, const std::string& prefix = "");

  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  // Copies stored values into `params` (matched by prefix + name, shapes checked).
  void load_into(const ParamList& params, const std::string& prefix = "") const;
  ParamList with_prefix(const std::string& prefix) const;

  std::vector<std::uint8_t> serialize() const;
  static Archive deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> arrays_;
  std::vector<std::string> order_;
};

}  // namespace previvor::nn
