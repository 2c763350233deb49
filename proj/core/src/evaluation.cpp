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

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "structground/harness.hpp"

namespace structground {

nlohmann::json to_json(const Prediction& prediction) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : prediction.boxes) {
    if (b) boxes.push_back({b->x_min, b->y_min, b->x_max, b->y_max});
    else boxes.push_back(nullptr);
  }
  nlohmann::json scores = nlohmann::json::array();
  for (double s : prediction.scores) {
    if (std::isfinite(s)) scores.push_back(s);
    else scores.push_back(nullptr);
  }
  nlohmann::json doc{{"record_id", prediction.record_id},
                     {"boxes", std::move(boxes)},
                     {"scores", std::move(scores)},
                     {"fallback", prediction.fallback},
                     {"box_indices", prediction.box_indices}};
  if (prediction.error) doc["error"] = *prediction.error;
  return doc;
}

Prediction prediction_from_json(const nlohmann::json& doc) {
  Prediction p;
  try {
    p.record_id = doc.at("record_id").get<std::string>();
    for (const auto& b : doc.at("boxes")) {
      if (b.is_null()) {
        p.boxes.emplace_back();
      } else {
        p.boxes.push_back(BBox::checked(b.at(0).get<double>(), b.at(1).get<double>(),
                                        b.at(2).get<double>(), b.at(3).get<double>()));
      }
    }
    for (const auto& s : doc.at("scores"))
      p.scores.push_back(s.is_null() ? std::nan("") : s.get<double>());
    p.fallback = doc.value("fallback", false);
    if (doc.contains("box_indices")) p.box_indices = doc.at("box_indices").get<std::vector<long long>>();
    if (doc.contains("error")) p.error = doc.at("error").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("prediction: ") + e.what());
  }
  return p;
}

std::string serialize_predictions(std::span<const Prediction> predictions) {
  std::string out;
  for (const auto& p : predictions) out.append(to_json(p).dump()).push_back('\n');
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write predictions " + path.string());
  out << serialize_predictions(predictions);
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json records_json = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json item{{"record_id", r.record_id}, {"correct", r.correct}, {"total", r.total}};
    if (r.iou) item["iou"] = *r.iou;
    records_json.push_back(std::move(item));
  }
  return {{"metric", metric},   {"correct", correct}, {"total", total},
          {"accuracy", accuracy}, {"flags", flags},   {"config", config},
          {"records", std::move(records_json)}};
}

namespace {

template <typename Record>
void check_alignment(std::span<const Prediction> predictions, std::span<const Record> records) {
  if (predictions.size() != records.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(records.size()) + " records");
  }
  for (std::size_t n = 0; n < records.size(); ++n) {
    if (predictions[n].record_id != records[n].id) {
      throw Error(ErrorCode::kLengthMismatch, "prediction " + std::to_string(n) + " is for '" +
                                                  predictions[n].record_id + "', expected '" +
                                                  records[n].id + "'");
    }
  }
}

void finish(RunReport& report) {
  report.accuracy = report.total == 0 ? 0.0 : static_cast<double>(report.correct) / report.total;
}

}  // namespace

RunReport evaluate_rec(std::span<const Prediction> predictions, std::span<const RecRecord> records,
                       double iou_threshold) {
  check_alignment(predictions, records);
  RunReport report;
  report.metric = "rec-accuracy@iou" + std::to_string(iou_threshold).substr(0, 4);
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& p = predictions[n];
    RecordOutcome outcome{records[n].id, 0, 1, std::nullopt};
    if (!p.boxes.empty() && p.boxes.front()) {
      outcome.iou = iou(*p.boxes.front(), records[n].gt_box);
      outcome.correct = *outcome.iou > iou_threshold ? 1 : 0;
    } else {
      report.flags.push_back(records[n].id + ": no predicted box");
    }
    report.correct += outcome.correct;
    report.total += 1;
    report.records.push_back(std::move(outcome));
  }
  finish(report);
  return report;
}

RunReport evaluate_links(std::span<const Prediction> predictions,
                         std::span<const LinkRecord> records) {
  check_alignment(predictions, records);
  RunReport report;
  report.metric = "link-accuracy";
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& p = predictions[n];
    const auto& r = records[n];
    RecordOutcome outcome{r.id, 0, r.gt_links.size(), std::nullopt};
    std::set<std::size_t> gold_slots;
    for (const auto& [slot, box] : r.gt_links) {
      gold_slots.insert(slot);
      if (slot < p.box_indices.size() && p.box_indices[slot] == static_cast<long long>(box))
        ++outcome.correct;
    }
    for (std::size_t slot = 0; slot < p.box_indices.size(); ++slot) {
      if (p.box_indices[slot] >= 0 && !gold_slots.contains(slot)) {
        report.flags.push_back(r.id + ": slot " + std::to_string(slot) +
                               " has no ground-truth link");
      }
    }
    report.correct += outcome.correct;
    report.total += outcome.total;
    report.records.push_back(std::move(outcome));
  }
  finish(report);
  return report;
}

}  // namespace structground
