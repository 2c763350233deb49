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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "structground/harness.hpp"
#include "structground/overlay.hpp"
#include "structground/synthetic.hpp"
#include "test_support.hpp"

namespace structground {
namespace {

using testing::TempDir;

BBox box(double a, double b, double c, double d) { return BBox::checked(a, b, c, d); }

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
}

const char* kRecHeader = R"({"schema": "structground/v1", "kind": "rec", "box_format": "xyxy"})";

std::string rec_line(const std::string& id, const std::string& gt) {
  return R"({"id": ")" + id +
         R"(", "image": {"id": "img", "width": 100, "height": 100}, "expression": "the cat", "proposals": [[0,0,10,10],[20,20,60,60]], "gt_box": )" +
         gt + "}";
}

RecRecord rec_record(std::string id, BBox gt) {
  return {std::move(id), {"img", 100, 100, std::nullopt}, "the cat", {box(0, 0, 10, 10)}, gt};
}

Prediction rec_prediction(std::string id, std::optional<BBox> b) {
  Prediction p;
  p.record_id = std::move(id);
  p.boxes = {b};
  p.scores = {1.0};
  p.box_indices = {0};
  return p;
}

LinkRecord link_record(std::string id, std::vector<std::pair<std::size_t, std::size_t>> links) {
  LinkRecord r;
  r.id = std::move(id);
  r.image = {"img", 100, 100, std::nullopt};
  r.caption = "[NAME] hugs [NAME]";
  r.name_slots = find_name_slots(r.caption);
  r.proposals = {box(0, 0, 10, 10), box(50, 50, 90, 90)};
  r.gt_links = std::move(links);
  return r;
}

Prediction link_prediction(std::string id, std::vector<long long> indices) {
  Prediction p;
  p.record_id = std::move(id);
  p.box_indices = std::move(indices);
  p.boxes.assign(p.box_indices.size(), std::nullopt);
  p.scores.assign(p.box_indices.size(), 0.0);
  return p;
}

TEST(Dataset, LoadsWellFormedFile) {
  TempDir dir;
  write_lines(dir / "d.jsonl", {kRecHeader, rec_line("a", "[0,0,10,10]"), rec_line("b", "[1,1,9,9]"),
                                rec_line("c", "[20,20,60,60]")});
  const auto records = load_rec_dataset(dir / "d.jsonl");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[1].id, "b");
  EXPECT_EQ(records[1].gt_box, box(1, 1, 9, 9));
  EXPECT_EQ(records[0].proposals.size(), 2u);
}

TEST(Dataset, InvertedBoxNamesLine) {
  TempDir dir;
  write_lines(dir / "d.jsonl", {kRecHeader, rec_line("a", "[0,0,10,10]"), rec_line("b", "[9,9,1,1]")});
  try {
    load_rec_dataset(dir / "d.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidationError);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  const auto lenient = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(lenient.rec.size(), 1u);
  ASSERT_EQ(lenient.errors.size(), 1u);
  EXPECT_EQ(lenient.errors[0].line, 3u);
}

TEST(Dataset, ParseErrorAndMissingHeader) {
  TempDir dir;
  write_lines(dir / "d.jsonl", {kRecHeader, "{not json"});
  const auto lenient = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(lenient.errors.size(), 1u);
  EXPECT_EQ(lenient.errors[0].code, ErrorCode::kParseError);
  write_lines(dir / "e.jsonl", {});
  EXPECT_THROW(load_dataset(dir / "e.jsonl"), Error);
  try {
    load_dataset(dir / "missing.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(Dataset, XywhConversion) {
  TempDir dir;
  write_lines(dir / "d.jsonl",
              {R"({"schema": "structground/v1", "kind": "rec", "box_format": "xywh"})",
               rec_line("a", "[5,6,10,20]")});
  const auto records = load_rec_dataset(dir / "d.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].gt_box, box(5, 6, 15, 26));
  EXPECT_EQ(records[0].proposals[1], box(20, 20, 80, 80));
}

TEST(Dataset, LinkRecordsAndRoundTrip) {
  TempDir dir;
  write_lines(dir / "d.jsonl",
              {R"({"schema": "structground/v1", "kind": "links"})",
               R"({"id": "w", "image": {"id": "i", "width": 100, "height": 100, "uri": "i.jpg"}, "caption": "[NAME] hugs [NAME]", "proposals": [[0,0,10,10],[50,50,90,90]], "gt_links": [[0,1],[1,0]]})",
               R"({"id": "bad", "image": {"id": "i", "width": 100, "height": 100}, "caption": "[NAME]", "proposals": [[0,0,10,10]], "gt_links": [[3,0]]})"});
  const auto dataset = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(dataset.links.size(), 1u);
  EXPECT_EQ(dataset.errors.size(), 1u);
  EXPECT_EQ(dataset.links[0].name_slots, (std::vector<std::size_t>{0, 12}));
  EXPECT_EQ(dataset.links[0].image.uri, std::optional<std::string>("i.jpg"));
  write_dataset(dir / "copy.jsonl", dataset);
  const auto copy = load_dataset(dir / "copy.jsonl");
  ASSERT_EQ(copy.links.size(), 1u);
  EXPECT_EQ(copy.links[0].gt_links, dataset.links[0].gt_links);
  EXPECT_EQ(copy.links[0].proposals, dataset.links[0].proposals);
}

TEST(NameSlots, Indexing) {
  EXPECT_EQ(index_name_slots("[NAME] hugs [NAME] and [NAME]"), "[NAME_0] hugs [NAME_1] and [NAME_2]");
  EXPECT_EQ(find_name_slots("no names"), std::vector<std::size_t>{});
}

TEST(Predictions, JsonRoundTrip) {
  TempDir dir;
  Prediction a = rec_prediction("a", box(1.5, 2, 3, 4.25));
  Prediction b = link_prediction("b", {1, -1});
  b.scores = {0.5, std::nan("")};
  b.error = "replay miss";
  b.fallback = true;
  const std::vector<Prediction> preds{a, b};
  write_predictions(dir / "p.jsonl", preds);
  const auto back = read_predictions(dir / "p.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1].box_indices, b.box_indices);
  EXPECT_TRUE(std::isnan(back[1].scores[1]));
  EXPECT_EQ(back[1].error, b.error);
  EXPECT_FALSE(back[1].boxes[0].has_value());
  EXPECT_EQ(serialize_predictions(back), serialize_predictions(preds));
}

TEST(EvaluateRec, Examples) {
  const std::vector<RecRecord> records{rec_record("a", box(0, 0, 10, 10)),
                                       rec_record("b", box(0, 0, 10, 10)),
                                       rec_record("c", box(0, 0, 10, 10)),
                                       rec_record("d", box(0, 0, 10, 10))};
  std::vector<Prediction> exact;
  for (const auto& r : records) exact.push_back(rec_prediction(r.id, r.gt_box));
  EXPECT_EQ(evaluate_rec(exact, records).accuracy, 1.0);

  // Half the gt area, fully inside it: IoU exactly 0.5.
  const std::vector<RecRecord> one{records[0]};
  const std::vector<Prediction> half{rec_prediction("a", box(0, 0, 5, 10))};
  const auto strict = evaluate_rec(half, one);
  EXPECT_EQ(*strict.records[0].iou, 0.5);
  EXPECT_EQ(strict.accuracy, 0.0);

  auto mixed = exact;
  mixed[2].boxes[0] = box(50, 50, 60, 60);
  const auto report = evaluate_rec(mixed, records);
  EXPECT_EQ(report.accuracy, 0.75);
  EXPECT_EQ(report.correct, 3u);
  EXPECT_EQ(report.total, 4u);

  mixed[3].boxes[0] = std::nullopt;
  const auto flagged = evaluate_rec(mixed, records);
  EXPECT_EQ(flagged.accuracy, 0.5);
  EXPECT_EQ(flagged.flags.size(), 1u);
}

TEST(EvaluateRec, LengthMismatch) {
  const std::vector<RecRecord> records{rec_record("a", box(0, 0, 10, 10))};
  try {
    evaluate_rec({}, records);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
  const std::vector<Prediction> wrong_id{rec_prediction("z", box(0, 0, 1, 1))};
  EXPECT_THROW(evaluate_rec(wrong_id, records), Error);
}

TEST(EvaluateRec, PermutationInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  std::vector<RecRecord> records;
  std::vector<Prediction> preds;
  for (int k = 0; k < 30; ++k) {
    const auto gt = BBox::from_xywh(u(rng), u(rng), 10 + u(rng), 10 + u(rng));
    records.push_back(rec_record("r" + std::to_string(k), gt));
    preds.push_back(rec_prediction(records.back().id,
                                   BBox::from_xywh(gt.x_min + u(rng) / 8, gt.y_min, gt.width(), gt.height())));
  }
  const double base = evaluate_rec(preds, records).accuracy;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<RecRecord> r2;
    std::vector<Prediction> p2;
    for (auto n : order) {
      r2.push_back(records[n]);
      p2.push_back(preds[n]);
    }
    EXPECT_EQ(evaluate_rec(p2, r2).accuracy, base);
  }
}

TEST(EvaluateLinks, Examples) {
  const std::vector<LinkRecord> records{link_record("a", {{0, 1}, {1, 0}}),
                                        link_record("b", {{0, 0}, {1, 1}})};
  const std::vector<Prediction> perfect{link_prediction("a", {1, 0}), link_prediction("b", {0, 1})};
  EXPECT_EQ(evaluate_links(perfect, records).accuracy, 1.0);

  const std::vector<Prediction> half{link_prediction("a", {1, 1}), link_prediction("b", {1, 1})};
  const auto report = evaluate_links(half, records);
  EXPECT_EQ(report.accuracy, 0.5);
  EXPECT_EQ(report.total, 4u);
  EXPECT_TRUE(report.flags.empty());

  const std::vector<LinkRecord> partial{link_record("c", {{0, 1}})};
  const std::vector<Prediction> extra{link_prediction("c", {1, 0})};
  const auto flagged = evaluate_links(extra, partial);
  EXPECT_EQ(flagged.accuracy, 1.0);
  EXPECT_EQ(flagged.total, 1u);
  ASSERT_EQ(flagged.flags.size(), 1u);
  EXPECT_NE(flagged.flags[0].find("slot 1"), std::string::npos);
}

TEST(RunReport, JsonOmitsTiming) {
  RunReport report;
  report.metric = "m";
  report.timing = std::chrono::milliseconds(1234);
  EXPECT_FALSE(report.to_json().contains("timing"));
  EXPECT_EQ(report.to_json().at("metric"), "m");
}

TEST(RunGrounding, ReplayMissFallsBackAndIsFlagged) {
  Dataset dataset;
  dataset.rec.push_back({"r0", {"img", 100, 100, std::nullopt}, "an unknown caption",
                         {box(0, 0, 40, 40), box(50, 50, 90, 90)}, box(0, 0, 40, 40)});
  ReplayStore empty;
  auto backend = mock_backend(1, 32);
  EmbeddingGateway gateway(*backend);
  const auto out = run_grounding(dataset, default_run_config(DatasetKind::kRec), empty, gateway);
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.failures, 1u);
  const auto& p = out.records[0].prediction;
  EXPECT_TRUE(p.fallback);
  ASSERT_TRUE(p.error.has_value());
  ASSERT_EQ(p.boxes.size(), 1u);
  EXPECT_TRUE(p.boxes[0].has_value());
}

TEST(RunGrounding, SizePriorExcludesTinyDistractor) {
  const ImageRef image{"img", 200, 200, std::nullopt};
  // Box 1 is tiny (1% of the image) and carries the label the text points at.
  const std::vector<BBox> proposals{box(0, 0, 100, 100), box(150, 150, 170, 170), box(100, 0, 200, 90)};
  Dataset dataset;
  dataset.rec.push_back({"r0", image, "red apple", proposals, proposals[0]});
  ReplayStore fixtures;
  fixtures.add("red apple", "(red apple | | )");
  LabelBook labels;
  labels.add_text("red apple", "apple");
  labels.add_region(image.id, std::vector<BBox>{proposals[1]}, "apple");
  labels.add_region(image.id, std::vector<BBox>{proposals[0]}, "apple-ish");
  MockBackend backend({3, 32}, labels);
  EmbeddingGateway gateway(backend);

  auto config = default_run_config(DatasetKind::kRec);
  const auto off = run_grounding(dataset, config, fixtures, gateway);
  EXPECT_EQ(off.records[0].prediction.box_indices.front(), 1);
  config.size_prior = 0.05;
  const auto on = run_grounding(dataset, config, fixtures, gateway);
  const auto& indices = on.records[0].prediction.box_indices;
  ASSERT_EQ(indices.size(), 1u);
  EXPECT_NE(indices.front(), 1);
  EXPECT_EQ(on.failures, 0u);
}

TEST(RunGrounding, ConfigSnapshotExcludesWorkers) {
  auto a = default_run_config(DatasetKind::kRec);
  auto b = a;
  b.workers = 8;
  EXPECT_EQ(a.snapshot(), b.snapshot());
  b.size_prior = 0.05;
  EXPECT_NE(a.snapshot(), b.snapshot());
  EXPECT_EQ(default_run_config(DatasetKind::kLinks).ground.match.direction, Direction::kImageToText);
}

TEST(RunGrounding, LinkRecordUsesNameSlots) {
  const ImageRef image{"img", 200, 100, std::nullopt};
  LinkRecord record;
  record.id = "w0";
  record.image = image;
  record.caption = "[NAME] hugs [NAME]";
  record.name_slots = find_name_slots(record.caption);
  record.proposals = {box(120, 0, 190, 90), box(10, 0, 80, 90)};
  record.gt_links = {{0, 1}, {1, 0}};
  Dataset dataset;
  dataset.header.kind = DatasetKind::kLinks;
  dataset.links.push_back(record);

  ReplayStore fixtures;
  fixtures.add("[NAME_0] hugs [NAME_1]", "([NAME_0] | hugs | [NAME_1])");
  const auto config = default_run_config(DatasetKind::kLinks);
  const auto parsed = assemble_parsed_caption("[NAME_0] hugs [NAME_1]",
                                              {{"[NAME_0]", "hugs", "[NAME_1]"}}, config.phrase_mode);
  LabelBook labels;
  labels.add_text("a person", "person");
  labels.add_text(parsed.triplets[0].predicate_phrase, "hug");
  labels.add_region(image.id, std::vector<BBox>{record.proposals[0]}, "person");
  labels.add_region(image.id, std::vector<BBox>{record.proposals[1]}, "person");
  labels.add_region(image.id, std::vector<BBox>{record.proposals[1], record.proposals[0]}, "hug");
  MockBackend backend({5, 32}, labels);
  EmbeddingGateway gateway(backend);
  const auto out = run_grounding(dataset, config, fixtures, gateway);
  ASSERT_EQ(out.failures, 0u) << out.records[0].prediction.error.value_or("");
  const auto preds = out.predictions();
  EXPECT_EQ(preds[0].box_indices, (std::vector<long long>{1, 0}));
  EXPECT_EQ(evaluate_links(preds, dataset.links).accuracy, 1.0);
}

TEST(Overlay, Classes) {
  const auto record = rec_record("a", box(0, 0, 10, 10));
  auto with_second = record;
  with_second.proposals.push_back(box(50, 50, 90, 90));
  const auto correct = render_overlay(with_second, rec_prediction("a", box(0, 0, 10, 10)));
  EXPECT_NE(correct.find("class=\"correct\""), std::string::npos);
  EXPECT_NE(correct.find("class=\"gt\""), std::string::npos);
  EXPECT_NE(correct.find("class=\"proposal\""), std::string::npos);
  EXPECT_NE(correct.find("class=\"canvas\""), std::string::npos);
  EXPECT_EQ(correct.find("<image"), std::string::npos);
  const auto wrong = render_overlay(with_second, rec_prediction("a", box(50, 50, 90, 90)));
  EXPECT_NE(wrong.find("class=\"incorrect\""), std::string::npos);

  auto linked = with_second;
  linked.image.uri = "photos/a.jpg";
  const auto parsed = assemble_parsed_caption("the cat on the mat", {{"cat", "on", "mat"}},
                                              PhraseMode::kFullSentence);
  const auto svg = render_overlay(linked, rec_prediction("a", box(0, 0, 10, 10)), parsed);
  EXPECT_NE(svg.find("photos/a.jpg"), std::string::npos);
  EXPECT_NE(svg.find("class=\"triplet\""), std::string::npos);
  EXPECT_NE(svg.find("cat"), std::string::npos);
}

TEST(Synthetic, SuiteIsConsistent) {
  const auto suite = make_synthetic_suite(7, 20);
  ASSERT_EQ(suite.dataset.rec.size(), 20u);
  for (const auto& r : suite.dataset.rec) {
    EXPECT_TRUE(suite.fixtures.contains(r.expression));
    EXPECT_GE(r.proposals.size(), 3u);
    EXPECT_TRUE(std::find(r.proposals.begin(), r.proposals.end(), r.gt_box) != r.proposals.end());
  }
  EXPECT_LE(suite.labels.labels().size(), kSyntheticDimension / 2);
  const auto again = make_synthetic_suite(7, 20);
  EXPECT_EQ(again.labels.to_json(), suite.labels.to_json());

  TempDir dir;
  write_synthetic_suite(suite, dir.path());
  EXPECT_EQ(load_rec_dataset(dir / "dataset.jsonl").size(), 20u);
  EXPECT_EQ(ReplayStore::load(dir / "fixtures.jsonl").size(), suite.fixtures.size());
  EXPECT_EQ(LabelBook::load(dir / "labels.json").to_json(), suite.labels.to_json());
}

TEST(Synthetic, TripletsSolveSuite) {
  const auto suite = make_synthetic_suite(7, 20);
  MockBackend backend({7, kSyntheticDimension}, suite.labels);
  EmbeddingGateway gateway(backend);
  auto fixtures = suite.fixtures;
  const auto config = default_run_config(DatasetKind::kRec);
  const auto out = run_grounding(suite.dataset, config, fixtures, gateway);
  EXPECT_EQ(out.failures, 0u);
  EXPECT_EQ(evaluate_rec(out.predictions(), suite.dataset.rec).correct, 20u);
}

}  // namespace
}  // namespace structground
