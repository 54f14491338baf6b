// Copyright 2026 The OmniSeg Authors.
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

#include "synthref/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "common/error.hpp"

namespace omniseg::synth {

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  require(image.height > 0 && image.width > 0 &&
              image.rgb.size() == static_cast<std::size_t>(image.height) *
                                      image.width * 3,
          ErrorKind::kDimension, "image buffer does not match its extent");
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.rgb.data(), 0,
                                 nullptr))
    fail(ErrorKind::kIo, std::string("png encode failed: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.rgb.data(),
                                 0, nullptr))
    fail(ErrorKind::kIo, std::string("png encode failed: ") + desc.message);
  out.resize(size);
  return out;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    fail(ErrorKind::kFormat, std::string("png decode failed: ") + desc.message);
  desc.format = PNG_FORMAT_RGB;
  RgbImage img;
  img.height = static_cast<int>(desc.height);
  img.width = static_cast<int>(desc.width);
  img.rgb.resize(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&desc);
    fail(ErrorKind::kFormat, std::string("png decode failed: ") + desc.message);
  }
  return img;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kNotFound, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

RgbImage read_png(const std::filesystem::path& path) {
  return decode_png(read_file(path));
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_file(path, encode_png(image));
}

}  // namespace omniseg::synth
