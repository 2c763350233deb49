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

#include "structground/synthetic.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <string>

namespace structground {

namespace {

constexpr int kImageWidth = 640;
constexpr int kImageHeight = 480;
constexpr int kCell = 160;
constexpr int kCols = kImageWidth / kCell;
constexpr int kRows = kImageHeight / kCell;

constexpr std::array<std::string_view, 10> kSubjects = {
    "cat", "dog", "man", "woman", "horse", "bird", "boy", "girl", "cow", "sheep"};
constexpr std::array<std::string_view, 10> kObjects = {
    "laptop", "sofa", "bench", "umbrella", "table", "bicycle", "fence", "tree", "box", "ball"};
constexpr std::array<std::string_view, 8> kRelations = {
    "sitting on", "next to", "holding", "lying on", "looking at", "behind", "near", "standing by"};
constexpr std::array<std::string_view, 3> kClutter = {"lamp", "plant", "cup"};

struct SpatialCase {
  std::string_view predicate;
  bool horizontal;
  bool subject_first;  // subject center has the smaller coordinate
};

constexpr std::array<SpatialCase, 4> kSpatial = {{{"to the left of", true, true},
                                                  {"to the right of", true, false},
                                                  {"above", false, true},
                                                  {"below", false, false}}};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 rng_;
};

BBox box_in_cell(Draw& draw, int col, int row) {
  const int x0 = col * kCell + draw.between(4, 30);
  const int y0 = row * kCell + draw.between(4, 30);
  const int x1 = (col + 1) * kCell - draw.between(4, 30);
  const int y1 = (row + 1) * kCell - draw.between(4, 30);
  return BBox::checked(x0, y0, x1, y1);
}

}  // namespace

SyntheticSuite make_synthetic_suite(std::uint64_t seed, std::size_t scenes) {
  Draw draw(seed);
  SyntheticSuite suite;
  suite.dataset.header = {DatasetKind::kRec, BoxFormat::kXyxy};

  for (std::size_t n = 0; n < scenes; ++n) {
    const std::string subject(kSubjects[draw.below(kSubjects.size())]);
    const std::string object(kObjects[draw.below(kObjects.size())]);
    const std::string clutter(kClutter[draw.below(kClutter.size())]);
    const bool spatial = n % 5 == 4;
    const SpatialCase& sc = kSpatial[(n / 5) % kSpatial.size()];
    const std::string predicate =
        spatial ? std::string(sc.predicate) : std::string(kRelations[draw.below(kRelations.size())]);

    const std::string id = "synth-" + std::string(n < 10 ? "00" : "0") + std::to_string(n);
    ImageRef image{id, kImageWidth, kImageHeight, std::nullopt};

    // Box roles: 0 referent, 1 object, 2.. duplicates, last clutter.
    std::vector<BBox> boxes;
    std::size_t duplicates = 0;
    if (spatial) {
      // Referent, object and duplicate occupy increasing positions along the
      // rule's axis, with the duplicate on the wrong side of the object.
      const int lanes = sc.horizontal ? kCols : kRows;
      std::vector<int> picks(lanes);
      for (int i = 0; i < lanes; ++i) picks[i] = i;
      draw.shuffle(picks);
      std::array<int, 3> pos{picks[0], picks[1], picks[2]};
      std::sort(pos.begin(), pos.end());
      if (!sc.subject_first) std::swap(pos[0], pos[2]);
      const auto place = [&](int p) {
        const int other = static_cast<int>(draw.below(sc.horizontal ? kRows : kCols));
        return sc.horizontal ? box_in_cell(draw, p, other) : box_in_cell(draw, other, p);
      };
      boxes = {place(pos[0]), place(pos[1]), place(pos[2])};
      duplicates = 1;
      // Clutter takes any cell not used above.
      while (true) {
        const int col = static_cast<int>(draw.below(kCols));
        const int row = static_cast<int>(draw.below(kRows));
        const BBox probe = box_in_cell(draw, col, row);
        if (std::none_of(boxes.begin(), boxes.end(),
                         [&](const BBox& b) { return iou(b, probe) > 0.0; })) {
          boxes.push_back(probe);
          break;
        }
      }
    } else {
      duplicates = 1 + draw.below(3);
      std::vector<int> cells(kCols * kRows);
      for (int i = 0; i < kCols * kRows; ++i) cells[i] = i;
      draw.shuffle(cells);
      for (std::size_t b = 0; b < duplicates + 3; ++b)
        boxes.push_back(box_in_cell(draw, cells[b] % kCols, cells[b] / kCols));
    }

    const std::size_t clutter_box = boxes.size() - 1;
    const std::string phrase = subject + " " + predicate + " " + object;
    auto& labels = suite.labels;
    labels.add_region(id, std::span(&boxes[0], 1), subject);
    labels.add_region(id, std::span(&boxes[1], 1), object);
    for (std::size_t d = 0; d < duplicates; ++d)
      labels.add_region(id, std::span(&boxes[2 + d], 1), subject);
    labels.add_region(id, std::span(&boxes[clutter_box], 1), clutter);
    const std::array<BBox, 2> relation{boxes[0], boxes[1]};
    labels.add_region(id, relation, phrase);
    if (spatial) {
      const std::array<BBox, 2> decoy{boxes[2], boxes[1]};
      labels.add_region(id, decoy, phrase);
    }

    const std::string caption = "the " + subject + " " + predicate + " the " + object;
    labels.add_text(subject, subject);
    labels.add_text(object, object);
    labels.add_text(phrase, phrase);
    labels.add_text(caption, subject);
    suite.fixtures.add(caption, "(" + subject + " | " + predicate + " | " + object + ")");

    const BBox referent = boxes[0];
    std::vector<BBox> proposals = boxes;
    draw.shuffle(proposals);
    suite.dataset.rec.push_back({id, image, caption, std::move(proposals), referent});
  }
  return suite;
}

void write_synthetic_suite(const SyntheticSuite& suite, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset(dir / "dataset.jsonl", suite.dataset);
  suite.fixtures.save(dir / "fixtures.jsonl");
  std::ofstream out(dir / "labels.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write labels in " + dir.string());
  out << suite.labels.to_json().dump(2) << '\n';
}

}  // namespace structground
