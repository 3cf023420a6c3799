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

#include "manifest.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "morphfit/error.hpp"

namespace morphfit::cli {

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"command", m.command}, {"argv", m.argv},       {"config", m.config},
       {"seeds", m.seeds},     {"inputs", m.inputs},   {"outputs", m.outputs},
       {"metrics", m.metrics}, {"wall_clock_seconds", m.wall_clock_seconds}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  j.at("command").get_to(m.command);
  j.at("argv").get_to(m.argv);
  m.config = j.value("config", nlohmann::json::object());
  m.seeds = j.value("seeds", nlohmann::json::object());
  m.inputs = j.value("inputs", std::map<std::string, std::string>{});
  m.outputs = j.value("outputs", std::map<std::string, std::string>{});
  m.metrics = j.value("metrics", nlohmann::json::object());
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error(ErrorKind::kIo, "sha256 init failed");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  return h.hex();
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest " + path.string());
  os << nlohmann::json(manifest).dump(2) << '\n';
  if (!os) throw IoError("failed writing manifest " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifest " + path.string());
  try {
    return nlohmann::json::parse(is).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace morphfit::cli
