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

// Dataset ingestion, end-to-end grounding runs and scoring.
//
// Datasets are JSONL. The first line is a header
//   {"schema": "structground/v1", "kind": "rec"|"links", "box_format": "xyxy"|"xywh"}
// followed by one record per line:
//   rec:   {"id", "image": {"id","width","height","uri"?}, "expression",
//           "proposals": [[4 numbers], ...], "gt_box": [4 numbers]}
//   links: {"id", "image", "caption" (with [NAME] placeholders), "proposals",
//           "gt_links": [[slot, box], ...]}

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "structground/caption_parsing.hpp"
#include "structground/embedding.hpp"
#include "structground/matching.hpp"
#include "structground/model.hpp"
#include "structground/visual_pairing.hpp"

namespace structground {

inline constexpr std::string_view kDatasetSchema = "structground/v1";
inline constexpr std::string_view kNamePlaceholder = "[NAME]";

enum class DatasetKind { kRec, kLinks };
enum class BoxFormat { kXyxy, kXywh };

struct DatasetHeader {
  DatasetKind kind = DatasetKind::kRec;
  BoxFormat box_format = BoxFormat::kXyxy;
};

struct RecRecord {
  std::string id;
  ImageRef image;
  std::string expression;
  std::vector<BBox> proposals;
  BBox gt_box;
};

struct LinkRecord {
  std::string id;
  ImageRef image;
  std::string caption;
  // Byte offsets of each [NAME] occurrence, in order; slot s is the s-th.
  std::vector<std::size_t> name_slots;
  std::vector<BBox> proposals;
  std::vector<std::pair<std::size_t, std::size_t>> gt_links;  // (slot, box)
};

struct RecordError {
  std::size_t line = 0;
  ErrorCode code = ErrorCode::kParseError;
  std::string message;
};

struct Dataset {
  DatasetHeader header;
  std::vector<RecRecord> rec;
  std::vector<LinkRecord> links;
  // Malformed records are skipped and reported here.
  std::vector<RecordError> errors;

  std::size_t size() const { return header.kind == DatasetKind::kRec ? rec.size() : links.size(); }
};

// Throws kIoError for an unreadable file and kParseError for a bad header;
// per-record problems are collected in Dataset::errors.
Dataset load_dataset(const std::filesystem::path& path);
// Strict variants: the first bad record throws, naming its line.
std::vector<RecRecord> load_rec_dataset(const std::filesystem::path& path);
std::vector<LinkRecord> load_link_dataset(const std::filesystem::path& path);
// Writes corner-form boxes.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

std::vector<std::size_t> find_name_slots(std::string_view caption);
// "[NAME] hugs [NAME]" -> "[NAME_0] hugs [NAME_1]"
std::string index_name_slots(std::string_view caption);

// One line of the predictions file:
//   {"record_id", "boxes": [[x0,y0,x1,y1] | null, ...], "scores": [...],
//    "fallback": bool, "box_indices": [...], "error"?: str}
// For rec records boxes are best-first; for link records there is one entry
// per name slot, null / -1 when the slot stays unassigned.
struct Prediction {
  std::string record_id;
  std::vector<std::optional<BBox>> boxes;
  std::vector<double> scores;
  bool fallback = false;
  std::vector<long long> box_indices;
  std::optional<std::string> error;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

nlohmann::json to_json(const Prediction& prediction);
Prediction prediction_from_json(const nlohmann::json& doc);
std::string serialize_predictions(std::span<const Prediction> predictions);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

struct RecordOutcome {
  std::string record_id;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::optional<double> iou;
};

struct RunReport {
  std::string metric;
  std::vector<RecordOutcome> records;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<std::string> flags;
  nlohmann::json config = nlohmann::json::object();
  std::chrono::milliseconds timing{0};

  // Timing is left out so identical runs serialize identically.
  nlohmann::json to_json() const;
};

// Correct iff iou(best box, gt) > threshold (strict).
RunReport evaluate_rec(std::span<const Prediction> predictions, std::span<const RecRecord> records,
                       double iou_threshold = 0.5);
// Accuracy = matching links / ground-truth links. Slots predicted without a
// ground-truth link are excluded from the denominator and flagged.
RunReport evaluate_links(std::span<const Prediction> predictions,
                         std::span<const LinkRecord> records);

enum class Strategy {
  kTriplets,
  // Baseline: rank boxes by cosine(whole caption, box).
  kScoreAndRank,
};

struct RunConfig {
  Strategy strategy = Strategy::kTriplets;
  GroundOptions ground;
  PhraseMode phrase_mode = PhraseMode::kFullSentence;
  // Boxes smaller than this fraction of the image are dropped; 0 disables.
  double size_prior = 0.0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  PromptTemplate prompt = default_prompt_template();
  std::vector<SpatialRule> rules = default_spatial_rules();

  nlohmann::json snapshot() const;
};

// Defaults that depend on the dataset kind: links use image-to-text and the
// person template.
RunConfig default_run_config(DatasetKind kind);

struct RecordRun {
  Prediction prediction;
  std::optional<ParsedCaption> parsed;
  bool failed = false;
};

struct RunOutput {
  std::vector<RecordRun> records;
  std::size_t failures = 0;
  std::chrono::milliseconds elapsed{0};

  std::vector<Prediction> predictions() const;
};

RecordRun run_rec_record(const RecRecord& record, const RunConfig& config, CompletionSource& llm,
                         EmbeddingGateway& gateway);
RecordRun run_link_record(const LinkRecord& record, const RunConfig& config,
                          CompletionSource& llm, EmbeddingGateway& gateway);

// Records run on `config.workers` threads; output order is dataset order.
// Per-record failures degrade to score_and_rank and are counted, never fatal.
RunOutput run_grounding(const Dataset& dataset, const RunConfig& config, CompletionSource& llm,
                        EmbeddingGateway& gateway);

}  // namespace structground
