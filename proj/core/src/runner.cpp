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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <regex>
#include <thread>

#include "structground/harness.hpp"

namespace structground {

namespace {

constexpr std::string_view kPersonText = "a person";

std::string direction_name(Direction d) {
  return d == Direction::kTextToImage ? "text-to-image" : "image-to-text";
}

// Original proposal indices that survive the size prior; all of them when the
// prior would leave nothing.
std::vector<std::size_t> kept_boxes(std::span<const BBox> proposals, const ImageRef& image,
                                    double fraction) {
  if (fraction > 0.0) {
    try {
      return size_prior_filter(proposals, image, fraction);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAllFiltered) throw;
    }
  }
  std::vector<std::size_t> all(proposals.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  return all;
}

Scene make_scene(const ImageRef& image, std::span<const BBox> proposals,
                 std::span<const std::size_t> kept) {
  Scene scene{image, {}};
  for (auto k : kept) scene.boxes.push_back(proposals[k]);
  return scene;
}

struct Pick {
  std::vector<std::size_t> boxes;  // scene indices, best first
  std::vector<double> scores;
};

// Boxes chosen for one text entity, whichever direction selection ran in.
Pick boxes_for_entity(const GroundingResult& result, std::size_t entity) {
  Pick pick;
  if (result.direction == Direction::kTextToImage) {
    if (entity < result.matches.size()) {
      const auto& m = result.matches[entity];
      pick.boxes = m.targets;
      pick.scores = m.scores;
    }
    return pick;
  }
  const auto& r = result.instance;
  for (std::size_t k = 0; k < result.matches.size(); ++k) {
    const auto& m = result.matches[k];
    if (!m.low_confidence && std::find(m.targets.begin(), m.targets.end(), entity) != m.targets.end())
      pick.boxes.push_back(k);
  }
  std::stable_sort(pick.boxes.begin(), pick.boxes.end(), [&](std::size_t a, std::size_t b) {
    return r.values(entity, a) > r.values(entity, b);
  });
  for (auto k : pick.boxes) pick.scores.push_back(r.values(entity, k));
  return pick;
}

void fill_rec_prediction(Prediction& p, const Pick& pick, std::span<const std::size_t> kept,
                         std::span<const BBox> proposals) {
  p.boxes.clear();
  p.scores = pick.scores;
  p.box_indices.clear();
  for (auto k : pick.boxes) {
    p.box_indices.push_back(static_cast<long long>(kept[k]));
    p.boxes.emplace_back(proposals[kept[k]]);
  }
}

// score_and_rank over the kept boxes; records the failure reason.
void rec_fallback(RecordRun& run, const RecRecord& record, const Scene& scene,
                  std::span<const std::size_t> kept, const RunConfig& config,
                  EmbeddingGateway& gateway) {
  run.prediction.fallback = true;
  try {
    const auto result = ground_by_score_and_rank(record.expression, scene, gateway, config.ground.tta);
    fill_rec_prediction(run.prediction, {result.matches[0].targets, result.matches[0].scores}, kept,
                        record.proposals);
  } catch (const Error& e) {
    run.prediction.error = *run.prediction.error + "; fallback: " + e.what();
  }
}

std::string replace_name_tokens(const std::string& text) {
  static const std::regex token(R"(\[NAME_\d+\])");
  return std::regex_replace(text, token, std::string(kPersonText));
}

}  // namespace

nlohmann::json RunConfig::snapshot() const {
  nlohmann::json tta_json = nlohmann::json::array();
  for (auto m : ground.tta) tta_json.push_back(std::string(to_string(m)));
  nlohmann::json selection{{"mode", ground.match.selection.threshold ? "threshold" : "argmax"}};
  if (ground.match.selection.threshold) selection["tau"] = ground.match.selection.tau;
  return {{"strategy", strategy == Strategy::kTriplets ? "triplets" : "score-and-rank"},
          {"direction", direction_name(ground.match.direction)},
          {"selection", std::move(selection)},
          {"tta", std::move(tta_json)},
          {"subject_text",
           ground.subject_text == SubjectTextSource::kWholeCaption ? "caption" : "entity"},
          {"self_triplets_use_self_relations", ground.self_triplets_use_self_relations},
          {"phrase_mode",
           phrase_mode == PhraseMode::kPersonTemplate ? "person-template" : "full-sentence"},
          {"size_prior", size_prior},
          {"seed", seed},
          {"prompt_sha256", sha256_hex(format_prompt_template(prompt))},
          {"spatial_rules", to_json(rules)}};
}

RunConfig default_run_config(DatasetKind kind) {
  RunConfig config;
  if (kind == DatasetKind::kLinks) {
    config.ground.match.direction = Direction::kImageToText;
    config.phrase_mode = PhraseMode::kPersonTemplate;
  }
  return config;
}

std::vector<Prediction> RunOutput::predictions() const {
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.prediction);
  return out;
}

RecordRun run_rec_record(const RecRecord& record, const RunConfig& config, CompletionSource& llm,
                         EmbeddingGateway& gateway) {
  RecordRun run;
  run.prediction.record_id = record.id;
  const auto kept = kept_boxes(record.proposals, record.image, config.size_prior);
  const auto scene = make_scene(record.image, record.proposals, kept);
  if (config.strategy == Strategy::kScoreAndRank) {
    try {
      const auto result =
          ground_by_score_and_rank(record.expression, scene, gateway, config.ground.tta);
      fill_rec_prediction(run.prediction, {result.matches[0].targets, result.matches[0].scores},
                          kept, record.proposals);
    } catch (const Error& e) {
      run.failed = true;
      run.prediction.error = e.what();
    }
    return run;
  }
  try {
    run.parsed = parse_caption(record.expression, llm, config.prompt, config.phrase_mode);
    const auto result = ground(*run.parsed, scene, gateway, config.rules, config.ground);
    run.prediction.fallback = result.fallback;
    if (result.fallback) {
      fill_rec_prediction(run.prediction, {result.matches[0].targets, result.matches[0].scores},
                          kept, record.proposals);
      return run;
    }
    auto pick = boxes_for_entity(result, 0);
    if (pick.boxes.empty()) {
      // No box chose the referent; fall back to its best row of R.
      MatchConfig by_row = config.ground.match;
      by_row.direction = Direction::kTextToImage;
      const auto rows = select(result.instance, by_row);
      pick = {rows.matches[0].targets, rows.matches[0].scores};
    }
    fill_rec_prediction(run.prediction, pick, kept, record.proposals);
  } catch (const Error& e) {
    run.failed = true;
    run.prediction.error = e.what();
    rec_fallback(run, record, scene, kept, config, gateway);
  }
  return run;
}

RecordRun run_link_record(const LinkRecord& record, const RunConfig& config,
                          CompletionSource& llm, EmbeddingGateway& gateway) {
  RecordRun run;
  auto& p = run.prediction;
  p.record_id = record.id;
  const std::size_t slots = record.name_slots.size();
  p.boxes.assign(slots, std::nullopt);
  p.scores.assign(slots, std::nan(""));
  p.box_indices.assign(slots, -1);

  const auto kept = kept_boxes(record.proposals, record.image, config.size_prior);
  const auto scene = make_scene(record.image, record.proposals, kept);
  const auto assign = [&](std::size_t slot, std::size_t scene_box, double score) {
    p.boxes[slot] = record.proposals[kept[scene_box]];
    p.scores[slot] = score;
    p.box_indices[slot] = static_cast<long long>(kept[scene_box]);
  };

  if (config.strategy == Strategy::kScoreAndRank) {
    try {
      const auto result = ground_by_score_and_rank(
          replace_name_tokens(index_name_slots(record.caption)), scene, gateway, config.ground.tta);
      assign(0, result.matches[0].targets[0], result.matches[0].scores[0]);
    } catch (const Error& e) {
      run.failed = true;
      p.error = e.what();
    }
    return run;
  }
  try {
    const auto indexed = index_name_slots(record.caption);
    run.parsed = parse_caption(indexed, llm, config.prompt, config.phrase_mode);
    ParsedCaption encoder_view = *run.parsed;
    for (auto& t : encoder_view.triplets) {
      t.subject_text = replace_name_tokens(t.subject_text);
      t.object_text = replace_name_tokens(t.object_text);
      t.predicate_phrase = replace_name_tokens(t.predicate_phrase);
    }
    encoder_view.caption = replace_name_tokens(encoder_view.caption);
    const auto result = ground(encoder_view, scene, gateway, config.rules, config.ground);
    p.fallback = result.fallback;
    if (result.fallback) {
      if (!result.matches.empty() && !result.matches[0].targets.empty())
        assign(0, result.matches[0].targets[0], result.matches[0].scores[0]);
      return run;
    }
    for (std::size_t slot = 0; slot < slots; ++slot) {
      const std::string token = "[NAME_" + std::to_string(slot) + "]";
      const auto entity = std::find_if(
          run.parsed->entities.begin(), run.parsed->entities.end(),
          [&](const TextEntity& e) { return e.surface.find(token) != std::string::npos; });
      if (entity == run.parsed->entities.end()) continue;
      const auto pick = boxes_for_entity(result, entity->id);
      if (!pick.boxes.empty()) assign(slot, pick.boxes[0], pick.scores[0]);
    }
  } catch (const Error& e) {
    run.failed = true;
    p.error = e.what();
    p.fallback = true;
    try {
      const auto result = ground_by_score_and_rank(replace_name_tokens(index_name_slots(record.caption)),
                                                   scene, gateway, config.ground.tta);
      assign(0, result.matches[0].targets[0], result.matches[0].scores[0]);
    } catch (const Error& inner) {
      *p.error += std::string("; fallback: ") + inner.what();
    }
  }
  return run;
}

RunOutput run_grounding(const Dataset& dataset, const RunConfig& config, CompletionSource& llm,
                        EmbeddingGateway& gateway) {
  config.ground.match.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = dataset.size();
  RunOutput output;
  output.records.resize(n);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        output.records[i] = dataset.header.kind == DatasetKind::kRec
                                ? run_rec_record(dataset.rec[i], config, llm, gateway)
                                : run_link_record(dataset.links[i], config, llm, gateway);
      } catch (const std::exception& e) {
        auto& run = output.records[i];
        run.prediction.record_id =
            dataset.header.kind == DatasetKind::kRec ? dataset.rec[i].id : dataset.links[i].id;
        run.prediction.fallback = true;
        run.prediction.error = e.what();
        run.failed = true;
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, std::max<std::size_t>(n, 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  for (const auto& r : output.records) output.failures += r.failed ? 1 : 0;
  output.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  return output;
}

}  // namespace structground
