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

#include "structground/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace structground {

namespace {

double log_sum_exp(std::span<const double> xs) {
  const double top = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - top);
  return top + std::log(sum);
}

}  // namespace

Matrix<double> batch_similarity(
    std::span<const std::pair<TripletEmbedding, TripletEmbedding>> pairs) {
  Matrix<double> s(pairs.size(), pairs.size());
  for (std::size_t a = 0; a < pairs.size(); ++a)
    for (std::size_t b = 0; b < pairs.size(); ++b)
      s(a, b) = cosine(pairs[a].first.subject, pairs[b].second.subject) +
                cosine(pairs[a].first.predicate, pairs[b].second.predicate) +
                cosine(pairs[a].first.object, pairs[b].second.object);
  return s;
}

double contrastive_loss_from_similarity(const Matrix<double>& s, double temperature,
                                        LossVariant variant) {
  const std::size_t n = s.rows();
  if (n == 0) throw Error(ErrorCode::kEmptyBatch, "contrastive loss over an empty batch");
  if (s.cols() != n) throw Error(ErrorCode::kDimensionMismatch, "batch similarity must be square");

  double loss = 0.0;
  if (variant == LossVariant::kSoftmax) {
    if (!(temperature > 0.0)) throw Error(ErrorCode::kConfigError, "temperature must be positive");
    const Matrix<double> scaled_t = s.transposed();
    std::vector<double> line(n);
    for (std::size_t a = 0; a < n; ++a) {
      const double positive = s(a, a) / temperature;
      for (std::size_t b = 0; b < n; ++b) line[b] = s(a, b) / temperature;
      const double row_lse = log_sum_exp(line);
      for (std::size_t b = 0; b < n; ++b) line[b] = scaled_t(a, b) / temperature;
      const double col_lse = log_sum_exp(line);
      loss -= (positive - row_lse) + (positive - col_lse);
    }
    return loss;
  }

  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (!(s(a, b) > 0.0))
        throw Error(ErrorCode::kNonPositiveSimilarity,
                    "literal loss needs strictly positive similarities");
  for (std::size_t a = 0; a < n; ++a) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      row += s(a, b);
      col += s(b, a);
    }
    loss -= std::log(s(a, a) / row) + std::log(s(a, a) / col);
  }
  return loss;
}

double contrastive_loss(std::span<const std::pair<TripletEmbedding, TripletEmbedding>> pairs,
                        double temperature, LossVariant variant) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyBatch, "contrastive loss over an empty batch");
  return contrastive_loss_from_similarity(batch_similarity(pairs), temperature, variant);
}

std::vector<TripletDatapoint> group_triplet_datapoints(
    std::span<const std::pair<TextTripletKey, VisualTripletRef>> records) {
  std::vector<TripletDatapoint> out;
  std::map<TextTripletKey, std::size_t> index;
  for (const auto& [text, image] : records) {
    const auto [it, inserted] = index.emplace(text, out.size());
    if (inserted) out.push_back({text, {}});
    out[it->second].images.push_back(image);
  }
  return out;
}

EpochSampler::EpochSampler(std::vector<TripletDatapoint> datapoints, std::uint64_t seed)
    : datapoints_(std::move(datapoints)), seed_(seed) {
  for (const auto& d : datapoints_) {
    if (d.images.empty()) throw Error(ErrorCode::kEmptyInput, "datapoint without image triplets");
  }
}

std::vector<std::size_t> EpochSampler::sample(std::uint64_t epoch) const {
  // mt19937_64 and seed_seq are fully specified, so draws match across
  // standard libraries.
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> picks;
  picks.reserve(datapoints_.size());
  for (const auto& d : datapoints_) picks.push_back(static_cast<std::size_t>(rng() % d.images.size()));
  return picks;
}

}  // namespace structground
