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

#include <cmath>

#include "structground/embedding.hpp"

namespace structground {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [-1, 1) from the top 53 bits; identical on every platform.
double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

MockBackend::MockBackend(MockOptions options, LabelBook labels)
    : options_(options), labels_(std::move(labels)) {
  if (options_.dimension < 2) throw Error(ErrorCode::kConfigError, "mock dimension must be >= 2");
  const auto all = labels_.labels();
  if (all.size() > options_.dimension / 2) {
    throw Error(ErrorCode::kConfigError,
                std::to_string(all.size()) + " labels do not fit in dimension " +
                    std::to_string(options_.dimension));
  }
  for (std::size_t i = 0; i < all.size(); ++i) anchor_index_.emplace(all[i], i);
}

std::string MockBackend::name() const {
  std::string name = "mock-s" + std::to_string(options_.seed) + "-d" +
                     std::to_string(options_.dimension);
  if (!anchor_index_.empty()) name += "-labeled-" + sha256_hex(labels_.to_json().dump()).substr(0, 12);
  return name;
}

std::vector<double> MockBackend::embed_key(std::string_view key,
                                           const std::optional<std::string>& label) const {
  const std::size_t dim = options_.dimension;
  std::uint64_t state = fnv1a(key) ^ (options_.seed * 0xd1b54a32d192ed03ULL);
  std::vector<double> noise(dim);
  for (auto& x : noise) x = unit_interval(splitmix64(state));

  if (anchor_index_.empty()) return noise;

  if (!label) {
    // Keep unlabeled inputs off the anchor coordinates.
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = dim / 2; i < dim; ++i) out[i] = noise[i];
    return out;
  }
  double norm = 0.0;
  for (double x : noise) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = options_.label_noise * noise[i] / norm;
  const auto it = anchor_index_.find(*label);
  out[it->second] += 1.0;
  return out;
}

std::vector<std::vector<double>> MockBackend::embed_texts(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    out.push_back(embed_key("text\n" + text, labels_.text_label(text)));
  }
  return out;
}

std::vector<std::vector<double>> MockBackend::embed_regions(const ImageRef& image,
                                                            std::span<const RegionSpec> regions) {
  std::vector<std::vector<double>> out;
  out.reserve(regions.size());
  for (const auto& region : regions) {
    validate_region(image, region.boxes);
    const auto key = region_key(image.id, region.boxes);
    out.push_back(embed_key("region\n" + key + "\n" + std::string(to_string(region.render)),
                            labels_.region_label(image.id, region.boxes)));
  }
  return out;
}

std::unique_ptr<MockBackend> mock_backend(std::uint64_t seed, std::size_t dimension) {
  return std::make_unique<MockBackend>(MockOptions{seed, dimension});
}

}  // namespace structground
