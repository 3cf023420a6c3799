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

#pragma once

// Little-endian binary container shared by the model ("FIGM") and head
// weight ("FIGH") files:
//
//   char[4] magic | u32 version | u32 header fields (fixed per file type)
//   repeated: u32 name_length | name bytes | u32 element_count | elements
//
// Array elements are either IEEE-754 binary32 floats or u32 values; which one
// is fixed by the array's position in the file type's layout.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace morphfit::detail {

class ContainerWriter {
 public:
  ContainerWriter(std::string_view magic, std::uint32_t version);

  void header(std::uint32_t value);
  void f32_array(std::string_view name, std::span<const double> values);
  void u32_array(std::string_view name, std::span<const std::uint32_t> values);

  const std::vector<unsigned char>& bytes() const { return bytes_; }
  // Writes the whole buffer at once; on failure the target is removed.
  void write(const std::filesystem::path& path) const;

 private:
  void put_u32(std::uint32_t v);
  void put_name(std::string_view name);

  std::vector<unsigned char> bytes_;
};

class ContainerReader {
 public:
  ContainerReader(const std::filesystem::path& path, std::string_view magic,
                  std::uint32_t version);

  std::uint32_t header();
  std::vector<double> f32_array(std::string_view name);
  std::vector<std::uint32_t> u32_array(std::string_view name);
  void expect_end() const;

 private:
  std::uint32_t get_u32(const char* what);
  void expect_name(std::string_view name);

  std::string source_;
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace morphfit::detail
