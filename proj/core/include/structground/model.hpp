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

// Shared domain types: images, boxes, entities, triplets, embeddings and the
// dense matrices the matcher works with. Everything here is a value type and
// immutable once built, so it can be shared freely across worker threads.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "structground/error.hpp"

namespace structground {

struct ImageRef {
  std::string id;
  int width = 0;
  int height = 0;
  std::optional<std::string> uri;

  bool is_valid() const { return width > 0 && height > 0; }
};

// Corner-form rectangle in float pixels.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  // Throws kInvalidBox on zero-area, inverted, or non-finite input.
  static BBox checked(double x_min, double y_min, double x_max, double y_max);
  static BBox from_xywh(double x, double y, double w, double h);

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool is_valid() const;
  bool within(const ImageRef& image) const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

BBox union_box(const BBox& a, const BBox& b);
double iou(const BBox& a, const BBox& b);
std::pair<double, double> center(const BBox& box);

struct TextEntity {
  std::size_t id = 0;
  std::string surface;
  // False when the LLM normalized the phrase so it no longer occurs in the
  // caption verbatim.
  bool verbatim = true;

  friend bool operator==(const TextEntity&, const TextEntity&) = default;
};

struct FilledSlots {
  bool predicate = false;
  bool object = false;

  bool any() const { return predicate || object; }
  friend bool operator==(const FilledSlots&, const FilledSlots&) = default;
};

struct TextTriplet {
  std::size_t subject_id = 0;
  std::size_t object_id = 0;
  std::string subject_text;
  std::string predicate_text;
  std::string object_text;
  FilledSlots filled;
  // The text actually sent to the encoder for the predicate slot.
  std::string predicate_phrase;

  bool is_self_referential() const { return subject_id == object_id; }
  friend bool operator==(const TextTriplet&, const TextTriplet&) = default;
};

struct VisualTriplet {
  std::size_t subject_box = 0;
  std::size_t object_box = 0;
  BBox union_box;
  bool is_self_relation = false;

  friend bool operator==(const VisualTriplet&, const VisualTriplet&) = default;
};

// Unit-norm embedding. Only constructible through normalize() or adopt_unit(),
// so every instance satisfies the norm invariant.
class EmbeddingVec {
 public:
  EmbeddingVec() = default;

  // Wraps a vector that is already unit-norm (e.g. reloaded from the cache).
  // Throws kNonFinite / kZeroVector if it is not, within 1e-4.
  static EmbeddingVec adopt_unit(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  friend bool operator==(const EmbeddingVec&, const EmbeddingVec&) = default;

 private:
  explicit EmbeddingVec(std::vector<double> values) : values_(std::move(values)) {}
  friend EmbeddingVec normalize(std::span<const double> raw);

  std::vector<double> values_;
};

EmbeddingVec normalize(std::span<const double> raw);
double cosine(const EmbeddingVec& a, const EmbeddingVec& b);

struct TripletEmbedding {
  EmbeddingVec subject;
  EmbeddingVec predicate;
  EmbeddingVec object;

  friend bool operator==(const TripletEmbedding&, const TripletEmbedding&) = default;
};

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

enum class Direction { kTextToImage, kImageToText };

// S: rows are text triplets, columns visual triplets. `values` carries the
// masked sentinel on filtered pairs; `raw` always holds the unmasked sum.
struct StructuralSimilarity {
  Matrix<double> values;
  Matrix<double> raw;
  Matrix<std::uint8_t> allowed;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
};

// B: one-hot per row (text-to-image) or per column (image-to-text).
struct Indicator {
  Direction direction = Direction::kTextToImage;
  Matrix<std::uint8_t> entries;
};

// R: rows are text entities, columns visual entities. `support` counts the
// propagated terms that landed on each cell; zero support means no evidence.
struct InstanceScores {
  Matrix<double> values;
  Matrix<std::uint32_t> support;

  // Wraps a bare score matrix; every cell counts as supported.
  static InstanceScores from_values(Matrix<double> values);

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
};

// Selection for one query entity: a text entity when grounding text-to-image,
// a visual entity when grounding image-to-text.
struct EntityMatch {
  std::vector<std::size_t> targets;
  std::vector<double> scores;
  bool low_confidence = false;

  friend bool operator==(const EntityMatch&, const EntityMatch&) = default;
};

struct GroundingResult {
  Direction direction = Direction::kTextToImage;
  std::vector<EntityMatch> matches;
  InstanceScores instance;
  bool fallback = false;
  std::string fallback_reason;
};

}  // namespace structground
