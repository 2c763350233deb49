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

#include "structground/visual_pairing.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <utility>

namespace structground {

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool respects(const SpatialRule& rule, const BBox& subject, const BBox& object) {
  const auto [sx, sy] = center(subject);
  const auto [ox, oy] = center(object);
  const double s = rule.axis == Axis::kHorizontal ? sx : sy;
  const double o = rule.axis == Axis::kHorizontal ? ox : oy;
  return rule.order == Order::kSubjectBeforeObject ? s < o : s > o;
}

}  // namespace

std::vector<SpatialRule> default_spatial_rules() {
  return {
      {{"left"}, Axis::kHorizontal, Order::kSubjectBeforeObject},
      {{"right"}, Axis::kHorizontal, Order::kSubjectAfterObject},
      {{"above", "top"}, Axis::kVertical, Order::kSubjectBeforeObject},
      {{"below", "bottom", "under", "beneath"}, Axis::kVertical, Order::kSubjectAfterObject},
  };
}

void validate_spatial_rules(std::span<const SpatialRule> rules) {
  std::map<std::pair<std::string, Axis>, Order> seen;
  for (const auto& rule : rules) {
    if (rule.keywords.empty()) throw Error(ErrorCode::kConfigError, "spatial rule without keywords");
    for (const auto& kw : rule.keywords) {
      if (kw.empty()) throw Error(ErrorCode::kConfigError, "empty spatial keyword");
      const auto key = std::make_pair(to_lower(kw), rule.axis);
      const auto [it, inserted] = seen.emplace(key, rule.order);
      if (!inserted && it->second != rule.order)
        throw Error(ErrorCode::kConfigError, "keyword '" + kw + "' has conflicting orders");
    }
  }
}

std::vector<SpatialRule> parse_spatial_rules(const nlohmann::json& doc) {
  std::vector<SpatialRule> rules;
  try {
    for (const auto& item : doc) {
      SpatialRule rule;
      rule.keywords = item.at("keywords").get<std::vector<std::string>>();
      const auto axis = item.at("axis").get<std::string>();
      if (axis == "horizontal") rule.axis = Axis::kHorizontal;
      else if (axis == "vertical") rule.axis = Axis::kVertical;
      else throw Error(ErrorCode::kConfigError, "unknown axis '" + axis + "'");
      const auto order = item.at("order").get<std::string>();
      if (order == "subject-before-object") rule.order = Order::kSubjectBeforeObject;
      else if (order == "subject-after-object") rule.order = Order::kSubjectAfterObject;
      else throw Error(ErrorCode::kConfigError, "unknown order '" + order + "'");
      rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("spatial rules: ") + e.what());
  }
  validate_spatial_rules(rules);
  return rules;
}

std::vector<SpatialRule> load_spatial_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read spatial rules " + path.string());
  try {
    return parse_spatial_rules(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(std::span<const SpatialRule> rules) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rules) {
    out.push_back({{"keywords", r.keywords},
                   {"axis", r.axis == Axis::kHorizontal ? "horizontal" : "vertical"},
                   {"order", r.order == Order::kSubjectBeforeObject ? "subject-before-object"
                                                                     : "subject-after-object"}});
  }
  return out;
}

std::vector<VisualTriplet> build_visual_triplets(std::span<const BBox> boxes) {
  if (boxes.empty()) throw Error(ErrorCode::kEmptyScene, "scene has no boxes");
  std::vector<VisualTriplet> out;
  out.reserve(boxes.size() * boxes.size());
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    if (!boxes[k].is_valid())
      throw Error(ErrorCode::kInvalidBox, "box " + std::to_string(k) + " is invalid");
    for (std::size_t l = 0; l < boxes.size(); ++l) {
      out.push_back({k, l, k == l ? boxes[k] : union_box(boxes[k], boxes[l]), k == l});
    }
  }
  return out;
}

std::vector<const SpatialRule*> matching_rules(const TextTriplet& text_triplet,
                                               std::span<const SpatialRule> rules) {
  std::vector<const SpatialRule*> matched;
  if (text_triplet.filled.predicate) return matched;
  const auto predicate = to_lower(text_triplet.predicate_text);
  for (const auto& rule : rules) {
    const bool hit = std::any_of(rule.keywords.begin(), rule.keywords.end(), [&](const auto& kw) {
      return predicate.find(to_lower(kw)) != std::string::npos;
    });
    if (hit) matched.push_back(&rule);
  }
  return matched;
}

std::vector<bool> spatial_mask(const TextTriplet& text_triplet,
                               std::span<const VisualTriplet> visual_triplets,
                               std::span<const BBox> boxes,
                               std::span<const SpatialRule> rules) {
  std::vector<bool> keep(visual_triplets.size(), true);
  const auto matched = matching_rules(text_triplet, rules);
  if (matched.empty()) return keep;
  for (std::size_t i = 0; i < visual_triplets.size(); ++i) {
    const auto& vt = visual_triplets[i];
    if (vt.is_self_relation) {
      keep[i] = false;
      continue;
    }
    if (vt.subject_box >= boxes.size() || vt.object_box >= boxes.size())
      throw Error(ErrorCode::kIndexOutOfRange, "visual triplet references a missing box");
    for (const auto* rule : matched) {
      if (!respects(*rule, boxes[vt.subject_box], boxes[vt.object_box])) {
        keep[i] = false;
        break;
      }
    }
  }
  return keep;
}

std::vector<VisualTriplet> spatial_filter(const TextTriplet& text_triplet,
                                          std::span<const VisualTriplet> visual_triplets,
                                          std::span<const BBox> boxes,
                                          std::span<const SpatialRule> rules) {
  const auto keep = spatial_mask(text_triplet, visual_triplets, boxes, rules);
  std::vector<VisualTriplet> out;
  for (std::size_t i = 0; i < visual_triplets.size(); ++i) {
    if (keep[i]) out.push_back(visual_triplets[i]);
  }
  return out;
}

std::vector<std::size_t> size_prior_filter(std::span<const BBox> boxes, const ImageRef& image,
                                           double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw Error(ErrorCode::kConfigError, "size prior fraction must be in [0, 1)");
  const double min_area = fraction * static_cast<double>(image.width) * image.height;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].area() >= min_area) kept.push_back(i);
  }
  if (kept.empty())
    throw Error(ErrorCode::kAllFiltered, "size prior removed every box of image " + image.id);
  return kept;
}

}  // namespace structground
