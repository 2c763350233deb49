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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "structground/diagnostics.hpp"
#include "structground/harness.hpp"
#include "structground/matching.hpp"
#include "structground/synthetic.hpp"
#include "test_support.hpp"

namespace sg = structground;
namespace sgt = structground::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome outcome;
  try {
    outcome = check();
  } catch (const std::exception& e) {
    outcome = {false, std::string("exception: ") + e.what()};
  }
  if (!outcome.pass) ++failures;
  std::cout << (outcome.pass ? "PASS" : "FAIL") << "  " << name << ": " << outcome.detail
            << std::endl;
}

const std::vector<std::string> kPredicates{"near",  "holding", "to the left of", "right of",
                                           "above", "below",   "under"};

// Random caption over `m` entities with 1-4 triplets; every entity appears.
sg::ParsedCaption random_parse(std::mt19937_64& rng, std::size_t m) {
  sg::ParsedCaption parsed;
  parsed.caption = "caption " + std::to_string(rng() % 1000);
  for (std::size_t e = 0; e < m; ++e) parsed.entities.push_back({e, "thing" + std::to_string(rng() % 50), true});
  const std::size_t count = std::max<std::size_t>(m, 1 + rng() % 4);
  for (std::size_t t = 0; t < count; ++t) {
    sg::TextTriplet tt;
    tt.subject_id = t < m ? t : rng() % m;
    tt.object_id = rng() % m;
    tt.subject_text = parsed.entities[tt.subject_id].surface;
    tt.object_text = parsed.entities[tt.object_id].surface;
    tt.predicate_text = kPredicates[rng() % kPredicates.size()];
    tt.predicate_phrase = sg::compose_predicate_phrase(tt, sg::PhraseMode::kFullSentence);
    parsed.triplets.push_back(tt);
  }
  return parsed;
}

sg::Scene random_scene(std::mt19937_64& rng, std::size_t n) {
  sg::Scene scene{{"img" + std::to_string(rng() % 100000), 100, 100, std::nullopt}, {}};
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(rng() % 80);
    const double y = static_cast<double>(rng() % 80);
    scene.boxes.push_back(sg::BBox::checked(x, y, x + 1 + rng() % 20, y + 1 + rng() % 20));
  }
  return scene;
}

// Candidate mask computed from box centers, independent of the library's
// rule table.
std::vector<std::vector<bool>> reference_mask(const sg::ParsedCaption& parsed,
                                              const std::vector<sg::VisualTriplet>& visual,
                                              const std::vector<sg::BBox>& boxes) {
  std::vector<std::vector<bool>> allowed(parsed.triplets.size(), std::vector<bool>(visual.size()));
  for (std::size_t i = 0; i < parsed.triplets.size(); ++i) {
    const auto& tt = parsed.triplets[i];
    const auto& p = tt.predicate_text;
    for (std::size_t j = 0; j < visual.size(); ++j) {
      const auto& a = boxes[visual[j].subject_box];
      const auto& b = boxes[visual[j].object_box];
      const double ax = a.x_min + a.x_max, bx = b.x_min + b.x_max;
      const double ay = a.y_min + a.y_max, by = b.y_min + b.y_max;
      bool ok = true;
      if (p.find("left") != std::string::npos) ok = ax < bx;
      if (p.find("right") != std::string::npos) ok = ax > bx;
      if (p.find("above") != std::string::npos) ok = ay < by;
      if (p.find("below") != std::string::npos || p.find("under") != std::string::npos) ok = ay > by;
      if (tt.subject_id == tt.object_id && !visual[j].is_self_relation) ok = false;
      allowed[i][j] = ok;
    }
  }
  return allowed;
}

Outcome instance_score_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  const std::vector<sg::RenderMode> tta{sg::RenderMode::kCrop, sg::RenderMode::kBlur};
  double worst = 0.0;
  std::size_t mismatched = 0;
  for (int instance = 0; instance < 500; ++instance) {
    const std::size_t m = 1 + rng() % 3;
    const std::size_t n = 1 + rng() % 4;
    const auto parsed = random_parse(rng, m);
    const auto scene = random_scene(rng, n);
    sg::MockBackend backend({rng(), 32});
    sg::EmbeddingGateway gateway(backend);
    sg::GroundOptions options;
    options.match.direction = rng() % 2 ? sg::Direction::kTextToImage : sg::Direction::kImageToText;
    const auto result = sg::ground(parsed, scene, gateway, sg::default_spatial_rules(), options);

    const auto visual = sg::build_visual_triplets(scene.boxes);
    std::vector<sg::TripletEmbedding> texts;
    for (const auto& tt : parsed.triplets) {
      const std::vector<std::string> words{tt.subject_text, tt.predicate_phrase, tt.object_text};
      const auto v = gateway.embed_texts(words);
      texts.push_back({v[0], v[1], v[2]});
    }
    std::vector<sg::TripletEmbedding> visuals;
    for (const auto& vt : visual) visuals.push_back(gateway.embed_visual_triplet(scene.boxes, vt, scene.image, tta));
    const auto ref = sgt::reference_pipeline(texts, visuals, reference_mask(parsed, visual, scene.boxes),
                                             parsed.triplets, visual, m, n,
                                             options.match.direction == sg::Direction::kTextToImage);
    bool ok = result.instance.rows() == m && result.instance.cols() == n;
    for (std::size_t e = 0; ok && e < m; ++e) {
      for (std::size_t k = 0; k < n; ++k) {
        const double diff = std::abs(result.instance.values(e, k) - ref.r[e][k]);
        worst = std::max(worst, diff);
        ok = ok && diff <= 1e-9;
      }
    }
    if (!ok) ++mismatched;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream detail;
  detail << "500 instances, " << mismatched << " mismatched, max |dR| = " << worst << ", "
         << seconds << " s";
  return {mismatched == 0 && seconds < 10.0, detail.str()};
}

Outcome degenerate_reduction() {
  std::mt19937_64 rng(77);
  const std::vector<sg::RenderMode> tta{sg::RenderMode::kCrop, sg::RenderMode::kBlur};
  int agree = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::string caption = "object " + std::to_string(rng() % 100000);
    const auto parsed = sg::assemble_parsed_caption(caption, {{caption, "", ""}},
                                                    sg::PhraseMode::kFullSentence);
    const auto scene = random_scene(rng, 1 + rng() % 6);
    sg::MockBackend backend({rng(), 32});
    sg::EmbeddingGateway gateway(backend);
    const auto structured = sg::ground(parsed, scene, gateway, sg::default_spatial_rules(), {});
    const auto baseline = sg::ground_by_score_and_rank(caption, scene, gateway, tta);
    if (structured.matches.at(0).targets == baseline.matches.at(0).targets) ++agree;
  }
  return {agree == 100, std::to_string(agree) + "/100 selections equal"};
}

// Multiplies selected raw vectors by a positive factor keyed on the input.
class ScalingBackend : public sg::EmbeddingBackend {
 public:
  ScalingBackend(sg::EmbeddingBackend& inner, std::uint64_t salt) : inner_(inner), salt_(salt) {}
  std::string name() const override { return inner_.name(); }
  std::size_t dimension() const override { return inner_.dimension(); }
  std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) override {
    auto out = inner_.embed_texts(texts);
    for (std::size_t n = 0; n < out.size(); ++n) scale(out[n], texts[n]);
    return out;
  }
  std::vector<std::vector<double>> embed_regions(const sg::ImageRef& image,
                                                 std::span<const sg::RegionSpec> regions) override {
    auto out = inner_.embed_regions(image, regions);
    for (std::size_t n = 0; n < out.size(); ++n)
      scale(out[n], sg::region_key(image.id, regions[n].boxes) +
                        std::string(sg::to_string(regions[n].render)));
    return out;
  }

 private:
  void scale(std::vector<double>& v, const std::string& key) const {
    const auto h = std::hash<std::string>{}(key) ^ salt_;
    if (h % 2 == 0) return;
    const double factor = std::pow(10.0, static_cast<double>(h % 7) - 3.0) * (1.0 + (h % 13) / 10.0);
    for (auto& x : v) x *= factor;
  }

  sg::EmbeddingBackend& inner_;
  std::uint64_t salt_;
};

Outcome scale_invariance() {
  std::mt19937_64 rng(99);
  int same = 0;
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const auto parsed = random_parse(rng, 1 + rng() % 3);
    const auto scene = random_scene(rng, 1 + rng() % 4);
    sg::MockBackend backend({rng(), 32});
    ScalingBackend scaled(backend, rng());
    sg::EmbeddingGateway plain_gateway(backend);
    sg::EmbeddingGateway scaled_gateway(scaled);
    sg::GroundOptions options;
    options.match.direction = rng() % 2 ? sg::Direction::kTextToImage : sg::Direction::kImageToText;
    const auto a = sg::ground(parsed, scene, plain_gateway, sg::default_spatial_rules(), options);
    const auto b = sg::ground(parsed, scene, scaled_gateway, sg::default_spatial_rules(), options);
    bool ok = a.matches.size() == b.matches.size();
    for (std::size_t q = 0; ok && q < a.matches.size(); ++q)
      ok = a.matches[q].targets == b.matches[q].targets;
    for (std::size_t e = 0; e < a.instance.rows(); ++e)
      for (std::size_t k = 0; k < a.instance.cols(); ++k) {
        const double diff = std::abs(a.instance.values(e, k) - b.instance.values(e, k));
        worst = std::max(worst, diff);
        ok = ok && diff <= 1e-6;
      }
    if (ok) ++same;
  }
  std::ostringstream detail;
  detail << same << "/100 instances unchanged, max |dR| = " << worst;
  return {same == 100, detail.str()};
}

Outcome synthetic_suite() {
  const auto suite = sg::make_synthetic_suite(7, 20);
  sg::MockBackend backend({7, sg::kSyntheticDimension}, suite.labels);
  sg::EmbeddingGateway gateway(backend);
  auto fixtures = suite.fixtures;
  auto config = sg::default_run_config(sg::DatasetKind::kRec);
  const auto triplets = sg::run_grounding(suite.dataset, config, fixtures, gateway);
  config.strategy = sg::Strategy::kScoreAndRank;
  const auto baseline = sg::run_grounding(suite.dataset, config, fixtures, gateway);
  const auto ours = sg::evaluate_rec(triplets.predictions(), suite.dataset.rec).correct;
  const auto theirs = sg::evaluate_rec(baseline.predictions(), suite.dataset.rec).correct;
  return {ours == 20 && theirs <= 12 && triplets.failures == 0,
          "triplets " + std::to_string(ours) + "/20, score_and_rank " + std::to_string(theirs) + "/20"};
}

Outcome spatial_exhaustive() {
  // Four boxes, each centered on one of a 3x3 grid, sizes varying per box.
  const std::vector<std::string> predicates{"left of", "right of", "above", "below"};
  std::size_t scenes = 0, checks = 0, wrong = 0;
  std::array<int, 4> cell{};
  for (int code = 0; code < 9 * 9 * 9 * 9; ++code) {
    int rest = code;
    std::vector<sg::BBox> boxes;
    for (int k = 0; k < 4; ++k) {
      cell[k] = rest % 9;
      rest /= 9;
      const double cx = 10.0 + 10.0 * (cell[k] % 3);
      const double cy = 10.0 + 10.0 * (cell[k] / 3);
      const double half = 1.0 + k;
      boxes.push_back(sg::BBox::checked(cx - half, cy - half, cx + half, cy + half));
    }
    ++scenes;
    const auto visual = sg::build_visual_triplets(boxes);
    for (const auto& p : predicates) {
      sg::TextTriplet tt;
      tt.subject_text = "a";
      tt.object_text = "b";
      tt.object_id = 1;
      tt.predicate_text = p;
      const auto kept = sg::spatial_filter(tt, visual, boxes, sg::default_spatial_rules());
      std::set<std::pair<std::size_t, std::size_t>> got, expected;
      for (const auto& vt : kept) got.emplace(vt.subject_box, vt.object_box);
      for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t o = 0; o < 4; ++o) {
          const int sx = cell[s] % 3, sy = cell[s] / 3, ox = cell[o] % 3, oy = cell[o] / 3;
          bool keep = false;
          if (p == "left of") keep = sx < ox;
          if (p == "right of") keep = sx > ox;
          if (p == "above") keep = sy < oy;
          if (p == "below") keep = sy > oy;
          if (keep) expected.emplace(s, o);
        }
      }
      ++checks;
      if (got != expected) ++wrong;
    }
  }
  return {wrong == 0, std::to_string(scenes) + " scenes x 4 predicates, " + std::to_string(wrong) +
                          "/" + std::to_string(checks) + " pair sets differ"};
}

Outcome metrics() {
  const auto a = sg::BBox::checked(0, 0, 2, 2);
  const auto b = sg::BBox::checked(1, 1, 3, 3);
  const auto far = sg::BBox::checked(5, 5, 6, 6);
  const bool iou_ok = sg::iou(a, a) == 1.0 && sg::iou(a, far) == 0.0 &&
                      std::abs(sg::iou(a, b) - 1.0 / 7.0) <= 1e-12;
  const sg::RecRecord record{"r", {"img", 10, 10, std::nullopt}, "x", {a}, sg::BBox::checked(0, 0, 2, 2)};
  sg::Prediction half;
  half.record_id = "r";
  half.boxes = {sg::BBox::checked(0, 0, 1, 2)};
  sg::Prediction exact = half;
  exact.boxes = {record.gt_box};
  const std::vector<sg::RecRecord> records{record};
  const std::vector<sg::Prediction> at_half{half};
  const std::vector<sg::Prediction> at_one{exact};
  const auto strict = sg::evaluate_rec(at_half, records);
  const auto full = sg::evaluate_rec(at_one, records);
  const bool rec_ok = *strict.records[0].iou == 0.5 && strict.correct == 0 && full.correct == 1;
  std::ostringstream detail;
  detail << "iou identical=" << sg::iou(a, a) << " disjoint=" << sg::iou(a, far)
         << " overlap=" << sg::iou(a, b) << "; IoU 0.5 counted "
         << (strict.correct ? "correct" : "incorrect");
  return {iou_ok && rec_ok, detail.str()};
}

Outcome contrastive() {
  std::mt19937_64 rng(5);
  const auto random_triplet = [&] {
    return sg::TripletEmbedding{sgt::random_unit(rng, 32), sgt::random_unit(rng, 32), sgt::random_unit(rng, 32)};
  };
  const auto t = random_triplet();
  const std::vector<std::pair<sg::TripletEmbedding, sg::TripletEmbedding>> one{{t, t}};
  const double soft1 = sg::contrastive_loss(one);
  const double lit1 = sg::contrastive_loss(one, 1.0, sg::LossVariant::kLiteral);

  sg::Matrix<double> s(2, 2, 0.0);
  s(0, 0) = s(1, 1) = 3.0;
  const double two = sg::contrastive_loss_from_similarity(s, 1.0, sg::LossVariant::kSoftmax);
  const double closed_form = -2.0 * 2.0 * std::log(std::exp(3.0) / (std::exp(3.0) + 1.0));

  int ordered = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<sg::TripletEmbedding, sg::TripletEmbedding>> aligned;
    for (int k = 0; k < 6; ++k) {
      const auto x = random_triplet();
      aligned.push_back({x, x});
    }
    auto shuffled = aligned;
    const std::size_t shift = 1 + rng() % 5;
    for (std::size_t k = 0; k < shuffled.size(); ++k)
      shuffled[k].second = aligned[(k + shift) % aligned.size()].second;
    if (sg::contrastive_loss(aligned) <= sg::contrastive_loss(shuffled)) ++ordered;
  }
  const bool pass = std::abs(soft1) <= 1e-12 && std::abs(lit1) <= 1e-12 &&
                    std::abs(two - closed_form) <= 1e-4 && ordered == 50;
  std::ostringstream detail;
  detail.precision(6);
  detail << "batch-1 softmax=" << soft1 << " literal=" << lit1 << "; batch-2 " << two
         << " vs closed form -4 log(e^3/(e^3+1)) = " << closed_form
         << "; aligned <= shuffled " << ordered << "/50";
  return {pass, detail.str()};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Outcome determinism() {
  sgt::TempDir dir;
  const std::string cli = STRUCTGROUND_CLI;
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  const auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  if (run("synth --out-dir " + dir.path().string()) != 0) return {false, "synth failed"};
  const std::string ground = "ground --dataset " + p("dataset.jsonl") + " --fixtures " +
                             p("fixtures.jsonl") + " --backend mock:7 --labels " + p("labels.json");
  const int first = run(ground + " --out " + p("run1.jsonl"));
  const int second = run(ground + " --out " + p("run2.jsonl") + " --workers 4");
  const auto a = slurp(p("run1.jsonl"));
  const auto b = slurp(p("run2.jsonl"));
  const bool pass = first == 0 && second == 0 && !a.empty() && a == b;
  return {pass, "exit codes " + std::to_string(first) + "/" + std::to_string(second) + ", " +
                    std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
  report("instance-score oracle equivalence", instance_score_oracle);
  report("degenerate reduction", degenerate_reduction);
  report("scale invariance", scale_invariance);
  report("synthetic end-to-end", synthetic_suite);
  report("spatial filter enumeration", spatial_exhaustive);
  report("metrics", metrics);
  report("contrastive diagnostic", contrastive);
  report("determinism", determinism);
  std::cout << (failures == 0 ? "all acceptance criteria passed" : "acceptance criteria failed: " +
                                                                       std::to_string(failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
