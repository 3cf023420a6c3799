// Copyright 2026 The morphfit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "container.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "morphfit/error.hpp"

namespace morphfit::detail {

ContainerWriter::ContainerWriter(std::string_view magic, std::uint32_t version) {
  bytes_.insert(bytes_.end(), magic.begin(), magic.end());
  put_u32(version);
}

void ContainerWriter::put_u32(std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    bytes_.push_back(static_cast<unsigned char>((v >> shift) & 0xFFu));
  }
}

void ContainerWriter::put_name(std::string_view name) {
  put_u32(static_cast<std::uint32_t>(name.size()));
  bytes_.insert(bytes_.end(), name.begin(), name.end());
}

void ContainerWriter::header(std::uint32_t value) { put_u32(value); }

void ContainerWriter::f32_array(std::string_view name,
                                std::span<const double> values) {
  put_name(name);
  put_u32(static_cast<std::uint32_t>(values.size()));
  for (const double v : values) {
    put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

void ContainerWriter::u32_array(std::string_view name,
                                std::span<const std::uint32_t> values) {
  put_name(name);
  put_u32(static_cast<std::uint32_t>(values.size()));
  for (const auto v : values) put_u32(v);
}

void ContainerWriter::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
  out.close();
  if (!out) {
    std::error_code ignored;
    std::filesystem::remove(path, ignored);
    throw IoError("write failed: " + path.string());
  }
}

ContainerReader::ContainerReader(const std::filesystem::path& path,
                                 std::string_view magic, std::uint32_t version)
    : source_(path.string()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + source_);
  bytes_.assign(std::istreambuf_iterator<char>(in),
                std::istreambuf_iterator<char>());
  if (bytes_.size() < magic.size() ||
      !std::equal(magic.begin(), magic.end(), bytes_.begin())) {
    throw FormatError("bad magic in " + source_ + " (expected " +
                      std::string(magic) + ")");
  }
  pos_ = magic.size();
  const auto found = get_u32("version");
  if (found != version) {
    throw FormatError("unsupported version " + std::to_string(found) + " in " +
                      source_);
  }
}

std::uint32_t ContainerReader::get_u32(const char* what) {
  if (bytes_.size() - pos_ < 4) {
    throw FormatError(std::string("truncated file while reading ") + what +
                      ": " + source_);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
  }
  pos_ += 4;
  return v;
}

void ContainerReader::expect_name(std::string_view name) {
  const auto len = get_u32("array name length");
  if (bytes_.size() - pos_ < len) {
    throw FormatError("truncated array name: " + source_);
  }
  const std::string found(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                          bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
  pos_ += len;
  if (found != name) {
    throw FormatError("expected array '" + std::string(name) + "', found '" +
                      found + "' in " + source_);
  }
}

std::uint32_t ContainerReader::header() { return get_u32("header"); }

std::vector<double> ContainerReader::f32_array(std::string_view name) {
  expect_name(name);
  const auto count = get_u32("array length");
  if ((bytes_.size() - pos_) / 4 < count) {
    throw FormatError("truncated array '" + std::string(name) + "': " + source_);
  }
  std::vector<double> out(count);
  for (auto& v : out) {
    v = static_cast<double>(std::bit_cast<float>(get_u32("array element")));
  }
  return out;
}

std::vector<std::uint32_t> ContainerReader::u32_array(std::string_view name) {
  expect_name(name);
  const auto count = get_u32("array length");
  if ((bytes_.size() - pos_) / 4 < count) {
    throw FormatError("truncated array '" + std::string(name) + "': " + source_);
  }
  std::vector<std::uint32_t> out(count);
  for (auto& v : out) v = get_u32("array element");
  return out;
}

void ContainerReader::expect_end() const {
  if (pos_ != bytes_.size()) {
    throw FormatError("trailing bytes after last array: " + source_);
  }
}

}  // namespace morphfit::detail
