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

#include "structground/embedding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace structground {

std::string_view to_string(RenderMode mode) {
  return mode == RenderMode::kCrop ? "crop" : "blur";
}

RenderMode parse_render_mode(std::string_view text) {
  if (text == "crop") return RenderMode::kCrop;
  if (text == "blur") return RenderMode::kBlur;
  throw Error(ErrorCode::kConfigError, "unknown render mode '" + std::string(text) + "'");
}

std::vector<RenderMode> parse_render_modes(std::string_view text) {
  std::set<RenderMode> modes;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    if (!item.empty()) modes.insert(parse_render_mode(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (modes.empty()) throw Error(ErrorCode::kConfigError, "empty render mode list");
  return {modes.begin(), modes.end()};
}

void validate_region(const ImageRef& image, std::span<const BBox> boxes) {
  if (boxes.empty() || boxes.size() > 2)
    throw Error(ErrorCode::kInvalidRegion, "a region has one or two boxes");
  for (const auto& box : boxes) {
    if (!box.within(image))
      throw Error(ErrorCode::kInvalidRegion, "box outside the bounds of image " + image.id);
  }
}

std::string region_key(std::string_view image_id, std::span<const BBox> boxes) {
  nlohmann::json quantized = nlohmann::json::array();
  for (const auto& b : boxes) {
    quantized.push_back({std::llround(b.x_min * 100.0), std::llround(b.y_min * 100.0),
                         std::llround(b.x_max * 100.0), std::llround(b.y_max * 100.0)});
  }
  return nlohmann::json{{"image", image_id}, {"boxes", quantized}}.dump();
}

// --- LabelBook --------------------------------------------------------------

void LabelBook::add_text(std::string text, std::string label) {
  texts[std::move(text)] = std::move(label);
}

void LabelBook::add_region(std::string_view image_id, std::span<const BBox> boxes,
                           std::string label) {
  regions[region_key(image_id, boxes)] = std::move(label);
}

std::optional<std::string> LabelBook::text_label(std::string_view text) const {
  const auto it = texts.find(std::string(text));
  if (it == texts.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> LabelBook::region_label(std::string_view image_id,
                                                   std::span<const BBox> boxes) const {
  const auto it = regions.find(region_key(image_id, boxes));
  if (it == regions.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> LabelBook::labels() const {
  std::set<std::string> all;
  for (const auto& [_, label] : texts) all.insert(label);
  for (const auto& [_, label] : regions) all.insert(label);
  return {all.begin(), all.end()};
}

LabelBook LabelBook::from_json(const nlohmann::json& doc) {
  LabelBook book;
  try {
    for (const auto& [text, label] : doc.at("texts").items())
      book.texts[text] = label.get<std::string>();
    for (const auto& region : doc.at("regions")) {
      std::vector<BBox> boxes;
      for (const auto& b : region.at("boxes")) {
        boxes.push_back(BBox::checked(b.at(0).get<double>(), b.at(1).get<double>(),
                                      b.at(2).get<double>(), b.at(3).get<double>()));
      }
      book.add_region(region.at("image").get<std::string>(), boxes,
                      region.at("label").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("label book: ") + e.what());
  }
  return book;
}

LabelBook LabelBook::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read labels " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
}

nlohmann::json LabelBook::to_json() const {
  nlohmann::json regions_json = nlohmann::json::array();
  for (const auto& [key, label] : regions) {
    auto parsed = nlohmann::json::parse(key);
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& q : parsed.at("boxes")) {
      boxes.push_back({q[0].get<double>() / 100.0, q[1].get<double>() / 100.0,
                       q[2].get<double>() / 100.0, q[3].get<double>() / 100.0});
    }
    regions_json.push_back({{"image", parsed.at("image")}, {"boxes", boxes}, {"label", label}});
  }
  return {{"texts", texts}, {"regions", regions_json}};
}

// --- Gateway ----------------------------------------------------------------

namespace {

std::vector<RenderMode> canonical_tta(std::span<const RenderMode> tta) {
  std::set<RenderMode> modes(tta.begin(), tta.end());
  if (modes.empty()) throw Error(ErrorCode::kConfigError, "test-time augmentation set is empty");
  return {modes.begin(), modes.end()};
}

EmbeddingVec mean_of(std::span<const EmbeddingVec> parts) {
  if (parts.size() == 1) return parts.front();
  std::vector<double> sum(parts.front().dimension(), 0.0);
  for (const auto& p : parts) {
    const auto v = p.values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  for (double& x : sum) x /= static_cast<double>(parts.size());
  return normalize(sum);
}

}  // namespace

EmbeddingGateway::EmbeddingGateway(EmbeddingBackend& backend, GatewayOptions options,
                                   std::shared_ptr<EmbeddingCache> cache)
    : backend_(backend),
      options_(options),
      cache_(std::move(cache)),
      name_(backend.name()),
      dimension_(backend.dimension()) {
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (dimension_ < 2) throw Error(ErrorCode::kConfigError, "backend dimension must be >= 2");
}

EmbeddingVec EmbeddingGateway::ingest(std::vector<double> raw) const {
  if (raw.size() != dimension_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "backend returned dimension " + std::to_string(raw.size()) + ", handshake said " +
                    std::to_string(dimension_));
  }
  return normalize(raw);
}

std::vector<EmbeddingVec> EmbeddingGateway::embed_texts(std::span<const std::string> texts) {
  std::vector<std::optional<EmbeddingVec>> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw Error(ErrorCode::kEmptyInput, "cannot embed an empty text");
    if (cache_) {
      keys[i] = text_cache_key(name_, dimension_, texts[i]);
      out[i] = cache_->get(keys[i]);
    }
    if (!out[i]) missing.push_back(i);
  }
  for (std::size_t start = 0; start < missing.size(); start += options_.batch_size) {
    const std::size_t end = std::min(missing.size(), start + options_.batch_size);
    std::vector<std::string> chunk;
    for (std::size_t j = start; j < end; ++j) chunk.push_back(texts[missing[j]]);
    ++calls_;
    auto raw = backend_.embed_texts(chunk);
    if (raw.size() != chunk.size())
      throw Error(ErrorCode::kBackendUnavailable, "backend returned the wrong number of vectors");
    for (std::size_t j = start; j < end; ++j) {
      auto vec = ingest(std::move(raw[j - start]));
      if (cache_) cache_->put(keys[missing[j]], vec);
      out[missing[j]] = std::move(vec);
    }
  }
  std::vector<EmbeddingVec> result;
  result.reserve(out.size());
  for (auto& v : out) result.push_back(std::move(*v));
  return result;
}

std::vector<EmbeddingVec> EmbeddingGateway::fetch_renderings(const ImageRef& image,
                                                             std::span<const RegionSpec> specs) {
  std::vector<std::optional<EmbeddingVec>> out(specs.size());
  std::vector<std::string> keys(specs.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    validate_region(image, specs[i].boxes);
    if (cache_) {
      keys[i] = region_cache_key(name_, dimension_, image, specs[i]);
      out[i] = cache_->get(keys[i]);
    }
    if (!out[i]) missing.push_back(i);
  }
  for (std::size_t start = 0; start < missing.size(); start += options_.batch_size) {
    const std::size_t end = std::min(missing.size(), start + options_.batch_size);
    std::vector<RegionSpec> chunk;
    for (std::size_t j = start; j < end; ++j) chunk.push_back(specs[missing[j]]);
    ++calls_;
    auto raw = backend_.embed_regions(image, chunk);
    if (raw.size() != chunk.size())
      throw Error(ErrorCode::kBackendUnavailable, "backend returned the wrong number of vectors");
    for (std::size_t j = start; j < end; ++j) {
      auto vec = ingest(std::move(raw[j - start]));
      if (cache_) cache_->put(keys[missing[j]], vec);
      out[missing[j]] = std::move(vec);
    }
  }
  std::vector<EmbeddingVec> result;
  result.reserve(out.size());
  for (auto& v : out) result.push_back(std::move(*v));
  return result;
}

std::vector<EmbeddingVec> EmbeddingGateway::embed_regions(
    const ImageRef& image, std::span<const std::vector<BBox>> regions,
    std::span<const RenderMode> tta) {
  const auto modes = canonical_tta(tta);
  std::vector<RegionSpec> specs;
  specs.reserve(regions.size() * modes.size());
  for (const auto& boxes : regions) {
    validate_region(image, boxes);
    for (auto mode : modes) specs.push_back({boxes, mode});
  }
  const auto renderings = fetch_renderings(image, specs);
  std::vector<EmbeddingVec> out;
  out.reserve(regions.size());
  for (std::size_t r = 0; r < regions.size(); ++r) {
    out.push_back(mean_of(std::span(renderings).subspan(r * modes.size(), modes.size())));
  }
  return out;
}

EmbeddingVec EmbeddingGateway::embed_region(const RegionRequest& request,
                                            std::span<const RenderMode> tta) {
  const std::vector<std::vector<BBox>> regions{request.boxes};
  return embed_regions(request.image, regions, tta).front();
}

TripletEmbedding EmbeddingGateway::embed_visual_triplet(std::span<const BBox> boxes,
                                                        const VisualTriplet& vt,
                                                        const ImageRef& image,
                                                        std::span<const RenderMode> tta) {
  return embed_visual_triplets(boxes, std::span(&vt, 1), image, tta).front();
}

std::vector<TripletEmbedding> EmbeddingGateway::embed_visual_triplets(
    std::span<const BBox> boxes, std::span<const VisualTriplet> triplets, const ImageRef& image,
    std::span<const RenderMode> tta) {
  // Gather each distinct region once: single boxes first, then relation pairs.
  std::vector<std::vector<BBox>> regions;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  const auto region_for = [&](std::size_t k, std::size_t l) {
    const auto key = std::make_pair(k, l);
    const auto it = index.find(key);
    if (it != index.end()) return it->second;
    if (k >= boxes.size() || l >= boxes.size())
      throw Error(ErrorCode::kIndexOutOfRange, "visual triplet references a missing box");
    regions.push_back(k == l ? std::vector<BBox>{boxes[k]} : std::vector<BBox>{boxes[k], boxes[l]});
    index.emplace(key, regions.size() - 1);
    return regions.size() - 1;
  };
  std::vector<std::array<std::size_t, 3>> slots;
  slots.reserve(triplets.size());
  for (const auto& vt : triplets) {
    const auto s = region_for(vt.subject_box, vt.subject_box);
    const auto o = region_for(vt.object_box, vt.object_box);
    slots.push_back({s, 0, o});
  }
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    slots[i][1] = region_for(triplets[i].subject_box, triplets[i].object_box);
  }
  const auto vecs = embed_regions(image, regions, tta);
  std::vector<TripletEmbedding> out;
  out.reserve(triplets.size());
  for (const auto& s : slots) out.push_back({vecs[s[0]], vecs[s[1]], vecs[s[2]]});
  return out;
}

}  // namespace structground
