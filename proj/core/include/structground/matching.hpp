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

// Structural matching: triplet similarity S, the one-hot indicator B, the
// propagation of matched triplets to entity/box scores R, and the final
// per-entity selection.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "structground/caption_parsing.hpp"
#include "structground/embedding.hpp"
#include "structground/model.hpp"
#include "structground/visual_pairing.hpp"

namespace structground {

struct SelectionMode {
  bool threshold = false;
  double tau = 0.0;

  static SelectionMode argmax() { return {}; }
  static SelectionMode at_least(double tau) { return {true, tau}; }
};

struct MatchConfig {
  Direction direction = Direction::kTextToImage;
  SelectionMode selection;
  double masked_value = -std::numeric_limits<double>::infinity();

  void validate() const;
};

// cos(subject) + cos(predicate) + cos(object).
double structural_similarity(const TripletEmbedding& text, const TripletEmbedding& visual);

// `allowed` is M'xN' (non-zero = candidate) or empty for "everything allowed".
StructuralSimilarity similarity_matrix(std::span<const TripletEmbedding> texts,
                                       std::span<const TripletEmbedding> visuals,
                                       const Matrix<std::uint8_t>& allowed = {},
                                       double masked_value = -std::numeric_limits<double>::infinity());

// Text-to-image: one 1 per row at the best allowed column (lowest index on
// ties). A row with no allowed column falls back to the raw similarities.
// Image-to-text applies the same rule per column.
Indicator indicator(const StructuralSimilarity& s, Direction direction);

// R(i, k) sums B*S over matched pairs where entity i and box k both fill the
// subject role, plus pairs where both fill the object role. Matched fallback
// cells contribute their raw similarity.
InstanceScores instance_scores(const StructuralSimilarity& s, const Indicator& b,
                               std::span<const TextTriplet> text_triplets,
                               std::span<const VisualTriplet> visual_triplets,
                               std::size_t num_text_entities, std::size_t num_boxes);

// Per query entity (rows of R for text-to-image, columns for image-to-text).
// Argmax considers supported cells only; an entity without any support gets
// target 0 with its raw score and is flagged low-confidence, as is an
// all-zero row. Threshold mode keeps supported cells with R >= tau, best
// first.
GroundingResult select(const InstanceScores& r, const MatchConfig& config);

// Baseline: argmax over cosine(caption, box).
GroundingResult score_and_rank(const EmbeddingVec& caption_embedding,
                               std::span<const EmbeddingVec> box_embeddings);

enum class SubjectTextSource { kEntity, kWholeCaption };

struct GroundOptions {
  MatchConfig match;
  std::vector<RenderMode> tta{RenderMode::kCrop, RenderMode::kBlur};
  SubjectTextSource subject_text = SubjectTextSource::kEntity;
  // Triplets whose subject and object are the same entity only consider
  // self-relation boxes.
  bool self_triplets_use_self_relations = true;
};

struct Scene {
  ImageRef image;
  std::vector<BBox> boxes;
};

// The texts sent to the encoder for one text triplet.
struct TripletTexts {
  std::string subject;
  std::string predicate;
  std::string object;
};

TripletTexts encoder_texts(const ParsedCaption& parsed, const TextTriplet& triplet,
                           SubjectTextSource source);

// Candidate mask: spatial rules plus the self-relation restriction.
Matrix<std::uint8_t> candidate_mask(std::span<const TextTriplet> text_triplets,
                                    std::span<const VisualTriplet> visual_triplets,
                                    std::span<const BBox> boxes,
                                    std::span<const SpatialRule> rules,
                                    bool self_triplets_use_self_relations);

// Full pipeline. A caption without triplets falls back to score_and_rank
// with fallback_reason "no-triplets".
GroundingResult ground(const ParsedCaption& parsed, const Scene& scene, EmbeddingGateway& gateway,
                       std::span<const SpatialRule> rules, const GroundOptions& options);

// score_and_rank with embeddings fetched through the gateway.
GroundingResult ground_by_score_and_rank(std::string_view caption, const Scene& scene,
                                         EmbeddingGateway& gateway,
                                         std::span<const RenderMode> tta);

}  // namespace structground
