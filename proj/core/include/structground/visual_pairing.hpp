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

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structground/model.hpp"

namespace structground {

enum class Axis { kHorizontal, kVertical };

// "Before" means the smaller coordinate: left of, or above (image y grows
// downwards).
enum class Order { kSubjectBeforeObject, kSubjectAfterObject };

struct SpatialRule {
  std::vector<std::string> keywords;
  Axis axis = Axis::kHorizontal;
  Order order = Order::kSubjectBeforeObject;

  friend bool operator==(const SpatialRule&, const SpatialRule&) = default;
};

// left/right on the horizontal axis; above/top and below/bottom/under/beneath
// on the vertical axis.
std::vector<SpatialRule> default_spatial_rules();

// Throws kConfigError on empty keyword lists or on a keyword bound to both
// orders of the same axis.
void validate_spatial_rules(std::span<const SpatialRule> rules);

// JSON: [{"keywords": [...], "axis": "horizontal"|"vertical",
//         "order": "subject-before-object"|"subject-after-object"}, ...]
std::vector<SpatialRule> parse_spatial_rules(const nlohmann::json& doc);
std::vector<SpatialRule> load_spatial_rules(const std::filesystem::path& path);
nlohmann::json to_json(std::span<const SpatialRule> rules);

// N^2 triplets in subject-major order; (k, k) pairs are self-relations.
std::vector<VisualTriplet> build_visual_triplets(std::span<const BBox> boxes);

// Rules whose keyword occurs (case-insensitively) in the predicate text. A
// synthesized predicate never matches.
std::vector<const SpatialRule*> matching_rules(const TextTriplet& text_triplet,
                                               std::span<const SpatialRule> rules);

// Per-visual-triplet keep flags for one text triplet; see spatial_filter.
std::vector<bool> spatial_mask(const TextTriplet& text_triplet,
                               std::span<const VisualTriplet> visual_triplets,
                               std::span<const BBox> boxes,
                               std::span<const SpatialRule> rules);

// Drops pairs whose box centers violate every matched rule's ordering (ties
// count as violations) and all self-relations once any rule matches. Returns
// the input unchanged when no rule matches.
std::vector<VisualTriplet> spatial_filter(const TextTriplet& text_triplet,
                                          std::span<const VisualTriplet> visual_triplets,
                                          std::span<const BBox> boxes,
                                          std::span<const SpatialRule> rules);

// Indices of boxes whose area is at least `fraction` of the image area.
// Throws kAllFiltered when nothing survives.
std::vector<std::size_t> size_prior_filter(std::span<const BBox> boxes, const ImageRef& image,
                                           double fraction);

}  // namespace structground
