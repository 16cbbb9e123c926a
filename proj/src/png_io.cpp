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

#include "previvor/png_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "previvor/errors.hpp"
#include "previvor/prior.hpp"

namespace previvor {

namespace {

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->bytes->size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->bytes->data() + cur->pos, n);
  cur->pos += n;
}

void write_to_memory(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void flush_noop(png_structp) {}

// Encodes rows of `bit_depth` samples; `rows` holds packed row data.
std::vector<std::uint8_t> encode_rows(int width, int height, int color_type, int bit_depth,
                                      std::vector<std::vector<std::uint8_t>>& rows) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  if (!png) throw IoError("png: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode: " + err);
  }
  png_set_write_fn(png, &out, write_to_memory, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  for (int r = 0; r < height; ++r) row_ptrs[static_cast<std::size_t>(r)] = rows[static_cast<std::size_t>(r)].data();
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Decodes to 8-bit RGB, or to 8-bit grey when `grey` is set.
std::vector<std::uint8_t> decode_to(const std::vector<std::uint8_t>& bytes, bool grey,
                                    int& width, int& height) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw IoError("png decode: not a PNG stream");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  if (!png) throw IoError("png: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png decode: " + err);
  }
  png_set_read_fn(png, &cursor, read_from_memory);
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if ((color_type & PNG_COLOR_MASK_COLOR) == 0 && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  const bool is_colour = (color_type & PNG_COLOR_MASK_COLOR) != 0 || color_type == PNG_COLOR_TYPE_PALETTE;
  if (grey && is_colour) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (!grey && !is_colour) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * static_cast<std::size_t>(height));
  row_ptrs.resize(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) row_ptrs[static_cast<std::size_t>(r)] = pixels.data() + stride * static_cast<std::size_t>(r);
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(img.height()));
  const auto stride = static_cast<std::size_t>(img.width()) * 3;
  for (int r = 0; r < img.height(); ++r) {
    auto begin = img.pixels().begin() + static_cast<std::ptrdiff_t>(stride * static_cast<std::size_t>(r));
    rows[static_cast<std::size_t>(r)].assign(begin, begin + static_cast<std::ptrdiff_t>(stride));
  }
  return encode_rows(img.width(), img.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  int w = 0, h = 0;
  auto pixels = decode_to(bytes, false, w, h);
  return RgbImage(w, h, std::move(pixels));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  write_file_bytes(path, encode_png(img));
}

RgbImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_mask_png(const std::filesystem::path& path, const PriorMask& mask) {
  const int w = mask.cols(), h = mask.rows();
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(h));
  for (int r = 0; r < h; ++r) {
    auto& row = rows[static_cast<std::size_t>(r)];
    row.assign(static_cast<std::size_t>((w + 7) / 8), 0);
    for (int c = 0; c < w; ++c) {
      if (mask(r, c)) row[static_cast<std::size_t>(c / 8)] |= static_cast<std::uint8_t>(0x80u >> (c % 8));
    }
  }
  write_file_bytes(path, encode_rows(w, h, PNG_COLOR_TYPE_GRAY, 1, rows));
}

PriorMask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  std::vector<std::uint8_t> grey;
  try {
    grey = decode_to(read_file_bytes(path), true, w, h);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  PriorMask mask(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      mask(r, c) = grey[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)] ? 1 : 0;
    }
  }
  return mask;
}

std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char head[24];
  in.read(reinterpret_cast<char*>(head), 24);
  if (in.gcount() != 24 || png_sig_cmp(head, 0, 8) != 0) throw IoError(path.string() + ": not a PNG file");
  auto be32 = [&](int o) {
    return static_cast<int>((static_cast<unsigned>(head[o]) << 24) | (static_cast<unsigned>(head[o + 1]) << 16) |
                            (static_cast<unsigned>(head[o + 2]) << 8) | head[o + 3]);
  };
  return {be32(16), be32(20)};
}

}  // namespace previvor
