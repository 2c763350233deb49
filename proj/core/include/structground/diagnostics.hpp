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

// Forward-only diagnostics for the triplet-matching objective: the
// contrastive loss over a batch of positive (text, visual) triplet pairs, and
// the grouping/sampling used to build conflict-free training batches.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "structground/model.hpp"

namespace structground {

enum class LossVariant {
  // Symmetric InfoNCE over S / temperature.
  kSoftmax,
  // -sum[log(S_pos / row sum) + log(S_pos / column sum)] on raw S; requires
  // every entry of S to be positive.
  kLiteral,
};

inline constexpr double kDefaultTemperature = 0.07;

// Batch S(a, b) = structural_similarity(pairs[a].first, pairs[b].second);
// positives sit on the diagonal.
Matrix<double> batch_similarity(
    std::span<const std::pair<TripletEmbedding, TripletEmbedding>> pairs);

double contrastive_loss(std::span<const std::pair<TripletEmbedding, TripletEmbedding>> pairs,
                        double temperature = kDefaultTemperature,
                        LossVariant variant = LossVariant::kSoftmax);

// Same loss on a precomputed batch similarity matrix.
double contrastive_loss_from_similarity(const Matrix<double>& s, double temperature,
                                        LossVariant variant);

struct TextTripletKey {
  std::string subject;
  std::string predicate;
  std::string object;

  auto operator<=>(const TextTripletKey&) const = default;
};

struct VisualTripletRef {
  std::string image_id;
  std::size_t subject_box = 0;
  std::size_t object_box = 0;

  friend bool operator==(const VisualTripletRef&, const VisualTripletRef&) = default;
};

struct TripletDatapoint {
  TextTripletKey text;
  std::vector<VisualTripletRef> images;
};

// Merges records with identical text triplets; datapoints keep the order of
// first appearance.
std::vector<TripletDatapoint> group_triplet_datapoints(
    std::span<const std::pair<TextTripletKey, VisualTripletRef>> records);

// Draws one image triplet per datapoint per epoch. Draws depend only on
// (seed, epoch), so any epoch can be replayed independently.
class EpochSampler {
 public:
  EpochSampler(std::vector<TripletDatapoint> datapoints, std::uint64_t seed);

  // Index into datapoints()[d].images for every datapoint d.
  std::vector<std::size_t> sample(std::uint64_t epoch) const;
  const std::vector<TripletDatapoint>& datapoints() const { return datapoints_; }

 private:
  std::vector<TripletDatapoint> datapoints_;
  std::uint64_t seed_;
};

}  // namespace structground
