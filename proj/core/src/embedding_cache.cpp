// Copyright 2026 The structground Authors.
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

#include <array>
#include <cmath>

#include <openssl/evp.h>

#include "structground/embedding.hpp"

namespace structground {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::kIoError, "SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

std::string keyed(std::string_view backend, std::size_t dimension, const nlohmann::json& request) {
  // nlohmann objects iterate keys in sorted order, so dump() is canonical.
  return sha256_hex(std::string(backend) + "\n" + std::to_string(dimension) + "\n" +
                    request.dump());
}

}  // namespace

std::string text_cache_key(std::string_view backend, std::size_t dimension, std::string_view text) {
  return keyed(backend, dimension, {{"kind", "text"}, {"text", text}});
}

std::string region_cache_key(std::string_view backend, std::size_t dimension,
                             const ImageRef& image, const RegionSpec& region) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : region.boxes) {
    boxes.push_back({std::llround(b.x_min * 100.0), std::llround(b.y_min * 100.0),
                     std::llround(b.x_max * 100.0), std::llround(b.y_max * 100.0)});
  }
  return keyed(backend, dimension,
               {{"kind", "region"},
                {"image", {{"id", image.id},
                           {"uri", image.uri.value_or("")},
                           {"width", image.width},
                           {"height", image.height}}},
                {"boxes", boxes},
                {"render", to_string(region.render)}});
}

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
  if (std::filesystem::exists(*file_)) {
    std::ifstream in(*file_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto rec = nlohmann::json::parse(line);
        entries_.emplace(rec.at("key").get<std::string>(),
                         EmbeddingVec::adopt_unit(rec.at("vector").get<std::vector<double>>()));
      } catch (const nlohmann::json::exception&) {
        // A torn final line from an interrupted run; everything before it is
        // intact, so skip it and let the entry be recomputed.
        continue;
      }
    }
  }
  out_.open(*file_, std::ios::app);
  if (!out_) throw Error(ErrorCode::kIoError, "cannot open cache file " + file_->string());
}

std::optional<EmbeddingVec> EmbeddingCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& key, const EmbeddingVec& vec) {
  std::lock_guard lock(mu_);
  const auto [it, inserted] = entries_.emplace(key, vec);
  if (!inserted || !file_) return;
  const auto values = vec.values();
  out_ << nlohmann::json{{"key", key}, {"vector", std::vector<double>(values.begin(), values.end())}}
              .dump()
       << '\n';
  out_.flush();
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace structground
