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

#include "structground/matching.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

namespace structground {

void MatchConfig::validate() const {
  if (selection.threshold && !std::isfinite(selection.tau))
    throw Error(ErrorCode::kConfigError, "threshold must be finite");
  if (!(masked_value < -3.0))
    throw Error(ErrorCode::kConfigError, "masked value must be below -3");
}

double structural_similarity(const TripletEmbedding& text, const TripletEmbedding& visual) {
  return cosine(text.subject, visual.subject) + cosine(text.predicate, visual.predicate) +
         cosine(text.object, visual.object);
}

StructuralSimilarity similarity_matrix(std::span<const TripletEmbedding> texts,
                                       std::span<const TripletEmbedding> visuals,
                                       const Matrix<std::uint8_t>& allowed, double masked_value) {
  if (texts.empty() || visuals.empty())
    throw Error(ErrorCode::kEmptyInput, "similarity matrix needs at least one triplet per side");
  const bool masked = !allowed.empty();
  if (masked && (allowed.rows() != texts.size() || allowed.cols() != visuals.size()))
    throw Error(ErrorCode::kIndexOutOfRange, "candidate mask shape does not match S");

  StructuralSimilarity s;
  s.raw = Matrix<double>(texts.size(), visuals.size());
  s.values = Matrix<double>(texts.size(), visuals.size());
  s.allowed = masked ? allowed : Matrix<std::uint8_t>(texts.size(), visuals.size(), 1);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::size_t j = 0; j < visuals.size(); ++j) {
      const double v = structural_similarity(texts[i], visuals[j]);
      s.raw(i, j) = v;
      s.values(i, j) = s.allowed(i, j) ? v : masked_value;
    }
  }
  return s;
}

namespace {

// Index of the best entry along one line of S; `at(n)` reads the n-th
// (value, raw, allowed) triple of the line.
template <typename At>
std::size_t best_along(std::size_t length, At at) {
  bool any_allowed = false;
  for (std::size_t n = 0; n < length && !any_allowed; ++n) any_allowed = std::get<2>(at(n)) != 0;
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t n = 0; n < length; ++n) {
    const auto [value, raw, ok] = at(n);
    if (any_allowed && !ok) continue;
    const double v = any_allowed ? value : raw;
    if (!found || v > best_value) {
      best = n;
      best_value = v;
      found = true;
    }
  }
  return best;
}

}  // namespace

Indicator indicator(const StructuralSimilarity& s, Direction direction) {
  Indicator b;
  b.direction = direction;
  b.entries = Matrix<std::uint8_t>(s.rows(), s.cols(), 0);
  if (direction == Direction::kTextToImage) {
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const auto j = best_along(s.cols(), [&](std::size_t n) {
        return std::make_tuple(s.values(i, n), s.raw(i, n), s.allowed(i, n));
      });
      b.entries(i, j) = 1;
    }
  } else {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const auto i = best_along(s.rows(), [&](std::size_t n) {
        return std::make_tuple(s.values(n, j), s.raw(n, j), s.allowed(n, j));
      });
      b.entries(i, j) = 1;
    }
  }
  return b;
}

InstanceScores instance_scores(const StructuralSimilarity& s, const Indicator& b,
                               std::span<const TextTriplet> text_triplets,
                               std::span<const VisualTriplet> visual_triplets,
                               std::size_t num_text_entities, std::size_t num_boxes) {
  if (b.entries.rows() != s.rows() || b.entries.cols() != s.cols() ||
      text_triplets.size() != s.rows() || visual_triplets.size() != s.cols()) {
    throw Error(ErrorCode::kIndexOutOfRange, "S, B and the triplet lists disagree in shape");
  }
  InstanceScores r;
  r.values = Matrix<double>(num_text_entities, num_boxes, 0.0);
  r.support = Matrix<std::uint32_t>(num_text_entities, num_boxes, 0);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const auto& tt = text_triplets[i];
    if (tt.subject_id >= num_text_entities || tt.object_id >= num_text_entities)
      throw Error(ErrorCode::kIndexOutOfRange, "text triplet references a missing entity");
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (!b.entries(i, j)) continue;
      const auto& vt = visual_triplets[j];
      if (vt.subject_box >= num_boxes || vt.object_box >= num_boxes)
        throw Error(ErrorCode::kIndexOutOfRange, "visual triplet references a missing box");
      const double score = s.raw(i, j);
      r.values(tt.subject_id, vt.subject_box) += score;
      r.support(tt.subject_id, vt.subject_box) += 1;
      r.values(tt.object_id, vt.object_box) += score;
      r.support(tt.object_id, vt.object_box) += 1;
    }
  }
  return r;
}

GroundingResult select(const InstanceScores& r, const MatchConfig& config) {
  config.validate();
  const bool by_row = config.direction == Direction::kTextToImage;
  const std::size_t queries = by_row ? r.rows() : r.cols();
  const std::size_t targets = by_row ? r.cols() : r.rows();
  const auto value = [&](std::size_t q, std::size_t t) {
    return by_row ? r.values(q, t) : r.values(t, q);
  };
  const auto supported = [&](std::size_t q, std::size_t t) {
    return (by_row ? r.support(q, t) : r.support(t, q)) > 0;
  };

  GroundingResult result;
  result.direction = config.direction;
  result.instance = r;
  result.matches.resize(queries);
  for (std::size_t q = 0; q < queries; ++q) {
    auto& match = result.matches[q];
    bool any_support = false;
    bool all_zero = true;
    for (std::size_t t = 0; t < targets; ++t) {
      any_support = any_support || supported(q, t);
      all_zero = all_zero && value(q, t) == 0.0;
    }
    match.low_confidence = !any_support || all_zero;
    if (targets == 0) continue;

    if (config.selection.threshold) {
      std::vector<std::size_t> kept;
      for (std::size_t t = 0; t < targets; ++t) {
        if (supported(q, t) && value(q, t) >= config.selection.tau) kept.push_back(t);
      }
      std::stable_sort(kept.begin(), kept.end(),
                       [&](std::size_t a, std::size_t b) { return value(q, a) > value(q, b); });
      for (auto t : kept) {
        match.targets.push_back(t);
        match.scores.push_back(value(q, t));
      }
      continue;
    }

    std::size_t best = 0;
    bool found = false;
    for (std::size_t t = 0; t < targets; ++t) {
      if (any_support && !supported(q, t)) continue;
      if (!found || value(q, t) > value(q, best)) {
        best = t;
        found = true;
      }
    }
    match.targets = {best};
    match.scores = {value(q, best)};
  }
  return result;
}

GroundingResult score_and_rank(const EmbeddingVec& caption_embedding,
                               std::span<const EmbeddingVec> box_embeddings) {
  if (box_embeddings.empty()) throw Error(ErrorCode::kEmptyScene, "score_and_rank needs boxes");
  Matrix<double> scores(1, box_embeddings.size());
  for (std::size_t k = 0; k < box_embeddings.size(); ++k)
    scores(0, k) = cosine(caption_embedding, box_embeddings[k]);
  MatchConfig config;
  return select(InstanceScores::from_values(std::move(scores)), config);
}

TripletTexts encoder_texts(const ParsedCaption& parsed, const TextTriplet& triplet,
                           SubjectTextSource source) {
  TripletTexts texts{triplet.subject_text, triplet.predicate_phrase, triplet.object_text};
  if (source == SubjectTextSource::kWholeCaption && triplet.subject_id == 0) {
    texts.subject = parsed.caption;
    if (triplet.filled.predicate) texts.predicate = parsed.caption;
    if (triplet.filled.object) texts.object = parsed.caption;
  }
  return texts;
}

Matrix<std::uint8_t> candidate_mask(std::span<const TextTriplet> text_triplets,
                                    std::span<const VisualTriplet> visual_triplets,
                                    std::span<const BBox> boxes,
                                    std::span<const SpatialRule> rules,
                                    bool self_triplets_use_self_relations) {
  Matrix<std::uint8_t> allowed(text_triplets.size(), visual_triplets.size(), 1);
  for (std::size_t i = 0; i < text_triplets.size(); ++i) {
    const auto& tt = text_triplets[i];
    const auto keep = spatial_mask(tt, visual_triplets, boxes, rules);
    const bool self_only = self_triplets_use_self_relations && tt.is_self_referential();
    for (std::size_t j = 0; j < visual_triplets.size(); ++j) {
      allowed(i, j) = keep[j] && (!self_only || visual_triplets[j].is_self_relation);
    }
  }
  return allowed;
}

GroundingResult ground_by_score_and_rank(std::string_view caption, const Scene& scene,
                                         EmbeddingGateway& gateway,
                                         std::span<const RenderMode> tta) {
  if (scene.boxes.empty()) throw Error(ErrorCode::kEmptyScene, "scene has no boxes");
  const std::vector<std::string> text{std::string(caption)};
  const auto caption_vec = gateway.embed_texts(text).front();
  std::vector<std::vector<BBox>> regions;
  for (const auto& b : scene.boxes) regions.push_back({b});
  const auto box_vecs = gateway.embed_regions(scene.image, regions, tta);
  return score_and_rank(caption_vec, box_vecs);
}

GroundingResult ground(const ParsedCaption& parsed, const Scene& scene, EmbeddingGateway& gateway,
                       std::span<const SpatialRule> rules, const GroundOptions& options) {
  options.match.validate();
  if (scene.boxes.empty()) throw Error(ErrorCode::kEmptyScene, "scene has no boxes");
  if (parsed.triplets.empty()) {
    auto result = ground_by_score_and_rank(parsed.caption, scene, gateway, options.tta);
    result.fallback = true;
    result.fallback_reason = "no-triplets";
    return result;
  }

  const auto visual = build_visual_triplets(scene.boxes);
  const auto allowed = candidate_mask(parsed.triplets, visual, scene.boxes, rules,
                                      options.self_triplets_use_self_relations);

  // Embed every distinct text once.
  std::vector<std::string> unique_texts;
  std::map<std::string, std::size_t> text_index;
  std::vector<std::array<std::size_t, 3>> slots;
  const auto index_of = [&](const std::string& text) {
    const auto [it, inserted] = text_index.emplace(text, unique_texts.size());
    if (inserted) unique_texts.push_back(text);
    return it->second;
  };
  for (const auto& tt : parsed.triplets) {
    const auto texts = encoder_texts(parsed, tt, options.subject_text);
    slots.push_back({index_of(texts.subject), index_of(texts.predicate), index_of(texts.object)});
  }
  const auto text_vecs = gateway.embed_texts(unique_texts);
  std::vector<TripletEmbedding> text_embeddings;
  text_embeddings.reserve(slots.size());
  for (const auto& s : slots)
    text_embeddings.push_back({text_vecs[s[0]], text_vecs[s[1]], text_vecs[s[2]]});

  const auto visual_embeddings =
      gateway.embed_visual_triplets(scene.boxes, visual, scene.image, options.tta);

  const auto s = similarity_matrix(text_embeddings, visual_embeddings, allowed,
                                   options.match.masked_value);
  const auto b = indicator(s, options.match.direction);
  const auto r = instance_scores(s, b, parsed.triplets, visual, parsed.entities.size(),
                                 scene.boxes.size());
  return select(r, options.match);
}

}  // namespace structground
