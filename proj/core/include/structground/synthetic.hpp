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

// Deterministic labeled-mock benchmark: scenes with duplicate subjects that
// only the relation to another object (or a spatial predicate) tells apart.

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "structground/caption_parsing.hpp"
#include "structground/embedding.hpp"
#include "structground/harness.hpp"

namespace structground {

inline constexpr std::size_t kSyntheticDimension = 128;

struct SyntheticSuite {
  Dataset dataset;
  ReplayStore fixtures;
  LabelBook labels;
};

// Scene layout and labels:
// - The referent and 1-3 duplicates share the subject label on their own
//   boxes, and the full caption carries the subject label too, so
//   score_and_rank can only guess among the duplicates.
// - Only the (referent, object) pair region carries the relation label.
// - Every fifth scene uses a spatial predicate instead: both duplicates pair
//   with the object under the relation label and only the center rule
//   removes the wrong one.
SyntheticSuite make_synthetic_suite(std::uint64_t seed = 7, std::size_t scenes = 20);

// Writes dataset.jsonl, fixtures.jsonl and labels.json into `dir`.
void write_synthetic_suite(const SyntheticSuite& suite, const std::filesystem::path& dir);

}  // namespace structground
