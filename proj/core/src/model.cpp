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

#include "structground/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace structground {

BBox BBox::checked(double x_min, double y_min, double x_max, double y_max) {
  BBox box{x_min, y_min, x_max, y_max};
  if (!box.is_valid()) {
    std::ostringstream msg;
    msg << "box [" << x_min << ", " << y_min << ", " << x_max << ", " << y_max
        << "] is inverted, empty or non-finite";
    throw Error(ErrorCode::kInvalidBox, msg.str());
  }
  return box;
}

BBox BBox::from_xywh(double x, double y, double w, double h) {
  return checked(x, y, x + w, y + h);
}

bool BBox::is_valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_max > x_min && y_max > y_min;
}

bool BBox::within(const ImageRef& image) const {
  return is_valid() && x_min >= 0.0 && y_min >= 0.0 && x_max <= image.width &&
         y_max <= image.height;
}

BBox union_box(const BBox& a, const BBox& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
          std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max)};
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::pair<double, double> center(const BBox& box) {
  return {(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0};
}

namespace {

double checked_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kNonFinite, "embedding has a NaN/Inf entry");
    sum += x * x;
  }
  return std::sqrt(sum);
}

}  // namespace

EmbeddingVec normalize(std::span<const double> raw) {
  const double norm = checked_norm(raw);
  if (raw.empty() || norm < 1e-12)
    throw Error(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(raw.begin(), raw.end());
  for (double& x : out) x /= norm;
  return EmbeddingVec(std::move(out));
}

EmbeddingVec EmbeddingVec::adopt_unit(std::vector<double> values) {
  const double norm = checked_norm(values);
  if (values.empty() || std::abs(norm - 1.0) > 1e-4)
    throw Error(ErrorCode::kZeroVector, "vector is not unit-norm");
  return EmbeddingVec(std::move(values));
}

double cosine(const EmbeddingVec& a, const EmbeddingVec& b) {
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cosine over dimensions " + std::to_string(a.dimension()) + " and " +
                    std::to_string(b.dimension()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  return std::inner_product(av.begin(), av.end(), bv.begin(), 0.0);
}

InstanceScores InstanceScores::from_values(Matrix<double> values) {
  InstanceScores out;
  out.support = Matrix<std::uint32_t>(values.rows(), values.cols(), 1);
  out.values = std::move(values);
  return out;
}

}  // namespace structground
