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
#include <filesystem>
#include <utility>
#include <vector>

#include "previvor/image.hpp"

namespace previvor {

class PriorMask;

std::vector<std::uint8_t> encode_png(const RgbImage& img);
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png(const std::filesystem::path& path);

// 1-bit greyscale PNG; non-zero samples read back as 1.
void write_mask_png(const std::filesystem::path& path, const PriorMask& mask);
PriorMask read_mask_png(const std::filesystem::path& path);

// (width, height) from the PNG header without decoding pixels.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace previvor
