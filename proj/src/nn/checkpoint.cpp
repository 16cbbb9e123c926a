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

#include "previvor/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "previvor/errors.hpp"
#include "previvor/png_io.hpp"

namespace previvor::nn {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'V', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

}  // namespace

void Archive::put(const std::string& name, const Tensor& t) {
  if (!arrays_.count(name)) order_.push_back(name);
  arrays_[name] = t.clone();
}

void Archive::put_all(const ParamList& params, const std::string& prefix) {
  for (const auto& p : params) put(prefix + p.name, p.tensor);
}

const Tensor& Archive::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw StateError("checkpoint has no array '" + name + "'");
  return it->second;
}

void Archive::load_into(const ParamList& params, const std::string& prefix) const {
  for (const auto& p : params) {
    const Tensor& src = get(prefix + p.name);
    if (src.shape() != p.tensor.shape()) {
      throw StateError("checkpoint array '" + prefix + p.name + "' has shape " + shape_str(src.shape()) +
                       ", model expects " + shape_str(p.tensor.shape()));
    }
    Tensor dst = p.tensor;
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
}

ParamList Archive::with_prefix(const std::string& prefix) const {
  ParamList out;
  for (const auto& name : order_) {
    if (name.rfind(prefix, 0) == 0) out.push_back({name.substr(prefix.size()), arrays_.at(name)});
  }
  return out;
}

std::vector<std::uint8_t> Archive::serialize() const {
  nlohmann::json header;
  header["format"] = 1;
  header["meta"] = meta;
  header["arrays"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& name : order_) {
    const Tensor& t = arrays_.at(name);
    header["arrays"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
    offset += t.numel();
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(sizeof(kMagic) + 8 + text.size() + offset * sizeof(double));
  std::size_t pos = 0;
  std::memcpy(out.data(), kMagic, sizeof(kMagic));
  pos += sizeof(kMagic);
  const std::uint64_t len = text.size();
  std::memcpy(out.data() + pos, &len, 8);
  pos += 8;
  std::memcpy(out.data() + pos, text.data(), text.size());
  pos += text.size();
  for (const auto& name : order_) {
    auto d = arrays_.at(name).data();
    std::memcpy(out.data() + pos, d.data(), d.size() * sizeof(double));
    pos += d.size() * sizeof(double);
  }
  return out;
}

Archive Archive::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint archive (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (16 + len > bytes.size()) throw IoError("checkpoint header truncated");
  Archive ar;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  ar.meta = header.value("meta", nlohmann::json::object());
  const std::size_t base = 16 + len;
  for (const auto& a : header.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    const auto shape = a.at("shape").get<Shape>();
    const auto offset = a.at("offset").get<std::size_t>();
    const auto count = a.at("count").get<std::size_t>();
    if (count != numel(shape) || base + (offset + count) * sizeof(double) > bytes.size()) {
      throw IoError("checkpoint array '" + name + "' is truncated or inconsistent");
    }
    std::vector<double> v(count);
    std::memcpy(v.data(), bytes.data() + base + offset * sizeof(double), count * sizeof(double));
    ar.order_.push_back(name);
    ar.arrays_[name] = Tensor::from(shape, std::move(v));
  }
  return ar;
}

void Archive::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

Archive Archive::load(const std::filesystem::path& path) {
  try {
    return deserialize(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace previvor::nn
