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

#pragma once

// Embedding production. Backends return raw vectors over the wire protocol
// (or in-process); the gateway normalizes, validates dimensions, batches,
// caches by content hash and aggregates test-time-augmentation renderings.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "structground/model.hpp"

namespace structground {

enum class RenderMode { kCrop, kBlur };

std::string_view to_string(RenderMode mode);
RenderMode parse_render_mode(std::string_view text);
// Parses "crop,blur" style lists; the result is deduplicated and ordered.
std::vector<RenderMode> parse_render_modes(std::string_view text);

// One rendering of a region: a single box, or a subject/object pair whose
// relation region the server renders (crop of the union hull, or per-box
// isolation when blurring).
struct RegionSpec {
  std::vector<BBox> boxes;
  RenderMode render = RenderMode::kCrop;

  friend bool operator==(const RegionSpec&, const RegionSpec&) = default;
};

struct RegionRequest {
  ImageRef image;
  std::vector<BBox> boxes;
};

// Throws kInvalidRegion unless 1-2 valid boxes lie inside the image.
void validate_region(const ImageRef& image, std::span<const BBox> boxes);

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  // Raw, not necessarily normalized, vectors in input order.
  virtual std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) = 0;
  virtual std::vector<std::vector<double>> embed_regions(const ImageRef& image,
                                                         std::span<const RegionSpec> regions) = 0;
};

// Canonical region identity used by labels and cache keys: image id plus the
// boxes quantized to hundredths of a pixel.
std::string region_key(std::string_view image_id, std::span<const BBox> boxes);

// Latent labels for the mock backend. Texts and regions carrying the same
// label embed near the same orthonormal anchor.
struct LabelBook {
  std::map<std::string, std::string> texts;
  std::map<std::string, std::string> regions;  // region_key -> label

  void add_text(std::string text, std::string label);
  void add_region(std::string_view image_id, std::span<const BBox> boxes, std::string label);
  std::optional<std::string> text_label(std::string_view text) const;
  std::optional<std::string> region_label(std::string_view image_id,
                                          std::span<const BBox> boxes) const;
  // Sorted distinct labels; a label's anchor is its position in this list.
  std::vector<std::string> labels() const;

  static LabelBook from_json(const nlohmann::json& doc);
  static LabelBook load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct MockOptions {
  std::uint64_t seed = 0;
  std::size_t dimension = 64;
  // Norm of the deterministic perturbation added to labeled anchors.
  double label_noise = 0.05;
};

// Deterministic hash-based backend. Without labels every input maps to a
// seeded pseudo-random vector. With labels, labeled inputs land on anchor
// e_{label index} plus small noise; unlabeled inputs are confined to the upper
// half of the coordinates so they stay nearly orthogonal to every anchor.
class MockBackend : public EmbeddingBackend {
 public:
  explicit MockBackend(MockOptions options, LabelBook labels = {});

  std::string name() const override;
  std::size_t dimension() const override { return options_.dimension; }
  std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) override;
  std::vector<std::vector<double>> embed_regions(const ImageRef& image,
                                                 std::span<const RegionSpec> regions) override;

  const LabelBook& labels() const { return labels_; }

 private:
  std::vector<double> embed_key(std::string_view key, const std::optional<std::string>& label) const;

  MockOptions options_;
  LabelBook labels_;
  std::map<std::string, std::size_t, std::less<>> anchor_index_;
};

std::unique_ptr<MockBackend> mock_backend(std::uint64_t seed, std::size_t dimension);

// Content-addressed store of normalized vectors. Optionally backed by an
// append-only JSONL file ({"key": hex, "vector": [...]}) that is replayed on
// open. Writes of an existing key are ignored, so racing writers are safe.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path file);

  std::optional<EmbeddingVec> get(const std::string& key) const;
  void put(const std::string& key, const EmbeddingVec& vec);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVec> entries_;
  std::optional<std::filesystem::path> file_;
  std::ofstream out_;
};

std::string sha256_hex(std::string_view data);
std::string text_cache_key(std::string_view backend, std::size_t dimension, std::string_view text);
std::string region_cache_key(std::string_view backend, std::size_t dimension,
                             const ImageRef& image, const RegionSpec& region);

struct GatewayOptions {
  std::size_t batch_size = 32;
};

class EmbeddingGateway {
 public:
  // `cache` may be null to disable caching.
  EmbeddingGateway(EmbeddingBackend& backend, GatewayOptions options = {},
                   std::shared_ptr<EmbeddingCache> cache = nullptr);

  std::size_t dimension() const { return dimension_; }
  const std::string& backend_name() const { return name_; }

  std::vector<EmbeddingVec> embed_texts(std::span<const std::string> texts);

  // One vector per (deduplicated) render mode, then the renormalized mean.
  EmbeddingVec embed_region(const RegionRequest& request, std::span<const RenderMode> tta);
  std::vector<EmbeddingVec> embed_regions(const ImageRef& image,
                                          std::span<const std::vector<BBox>> regions,
                                          std::span<const RenderMode> tta);

  // Subject and object from their single boxes; the predicate from the
  // two-box relation region, or the single box again for self-relations.
  TripletEmbedding embed_visual_triplet(std::span<const BBox> boxes, const VisualTriplet& vt,
                                        const ImageRef& image, std::span<const RenderMode> tta);
  std::vector<TripletEmbedding> embed_visual_triplets(std::span<const BBox> boxes,
                                                      std::span<const VisualTriplet> triplets,
                                                      const ImageRef& image,
                                                      std::span<const RenderMode> tta);

  // Number of backend calls issued so far.
  std::size_t protocol_calls() const { return calls_.load(); }

 private:
  std::vector<EmbeddingVec> fetch_renderings(const ImageRef& image,
                                             std::span<const RegionSpec> specs);
  EmbeddingVec ingest(std::vector<double> raw) const;

  EmbeddingBackend& backend_;
  GatewayOptions options_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::string name_;
  std::size_t dimension_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace structground
