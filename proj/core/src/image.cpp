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

#include "morphfit/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "morphfit/error.hpp"

namespace morphfit {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || c < 1) {
    throw ValidationError("image dimensions must be non-negative");
  }
  data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                  static_cast<std::size_t>(c),
              fill);
}

std::vector<unsigned char> quantize_rgb8(const Image& image) {
  if (image.channels != 3) {
    throw ValidationError("PPM output requires a 3-channel image");
  }
  std::vector<unsigned char> bytes(image.data.size());
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double c = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::floor(c * 255.0 + 0.5));
  }
  return bytes;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  const auto bytes = quantize_rgb8(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) return token;
    if (ch == '#' && token.empty()) {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  if (next_token(in) != "P6") throw FormatError("not a P6 PPM: " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw FormatError("malformed PPM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError("unsupported PPM geometry or maxval: " + path.string());
  }
  Image image(w, h, 3);
  std::vector<unsigned char> bytes(image.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("truncated PPM: " + path.string());
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    image.data[i] = bytes[i] / 255.0;
  }
  return image;
}

}  // namespace morphfit
