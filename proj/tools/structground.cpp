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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "structground/caption_parsing.hpp"
#include "structground/embedding.hpp"
#include "structground/embedding_http.hpp"
#include "structground/harness.hpp"
#include "structground/overlay.hpp"
#include "structground/synthetic.hpp"

namespace sg = structground;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitRecordFailures = 2;
constexpr std::size_t kDefaultMockDimension = sg::kSyntheticDimension;

struct SourceFlags {
  std::string fixtures;
  std::string llm_url;
  std::string llm_model = "gpt-3.5-turbo";
  std::string template_path;
  std::string phrase_mode;
};

struct BackendFlags {
  std::string backend = "mock";
  std::string labels;
  std::string cache;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

void add_source_flags(CLI::App* cmd, SourceFlags& f) {
  cmd->add_option("--fixtures", f.fixtures, "Replay fixture JSONL ({caption, completion})");
  cmd->add_option("--llm-url", f.llm_url, "Live completion endpoint URL");
  cmd->add_option("--llm-model", f.llm_model, "Model name sent to the live endpoint");
  cmd->add_option("--template", f.template_path, "Prompt template file");
  cmd->add_option("--phrase-mode", f.phrase_mode, "full|person (default by dataset kind)")
      ->check(CLI::IsMember({"full", "person"}));
}

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
  cmd->add_option("--backend", f.backend, "mock[:seed[:dim]] or http://host:port");
  cmd->add_option("--labels", f.labels, "Label book JSON for the mock backend");
  cmd->add_option("--cache", f.cache, "Embedding cache JSONL");
  cmd->add_option("--batch-size", f.batch_size, "Inputs per backend call")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Seed for the mock backend");
}

std::unique_ptr<sg::CompletionSource> make_source(const SourceFlags& f) {
  if (!f.fixtures.empty() && !f.llm_url.empty())
    throw sg::Error(sg::ErrorCode::kConfigError, "use either --fixtures or --llm-url");
  if (!f.fixtures.empty()) return std::make_unique<sg::ReplayStore>(sg::ReplayStore::load(f.fixtures));
  if (!f.llm_url.empty()) {
    sg::LlmClientOptions options;
    options.url = f.llm_url;
    options.model = f.llm_model;
    return std::make_unique<sg::HttpLlmClient>(options);
  }
  throw sg::Error(sg::ErrorCode::kConfigError, "one of --fixtures or --llm-url is required");
}

sg::PromptTemplate load_template(const SourceFlags& f) {
  return f.template_path.empty() ? sg::default_prompt_template()
                                 : sg::load_prompt_template(f.template_path);
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw sg::Error(sg::ErrorCode::kConfigError, std::string("bad ") + what + " '" + text + "'");
}

std::unique_ptr<sg::EmbeddingBackend> make_backend(const BackendFlags& f) {
  if (f.backend.rfind("http://", 0) == 0 || f.backend.rfind("https://", 0) == 0) {
    if (!f.labels.empty())
      throw sg::Error(sg::ErrorCode::kConfigError, "--labels only applies to the mock backend");
    return std::make_unique<sg::HttpBackend>(f.backend);
  }
  if (f.backend != "mock" && f.backend.rfind("mock:", 0) != 0)
    throw sg::Error(sg::ErrorCode::kConfigError, "unknown backend '" + f.backend + "'");
  sg::MockOptions options{f.seed, kDefaultMockDimension};
  if (f.backend.size() > 5) {
    const auto rest = f.backend.substr(5);
    const auto colon = rest.find(':');
    options.seed = parse_u64(rest.substr(0, colon), "mock seed");
    if (colon != std::string::npos)
      options.dimension = parse_u64(rest.substr(colon + 1), "mock dimension");
  }
  sg::LabelBook labels;
  if (!f.labels.empty()) labels = sg::LabelBook::load(f.labels);
  return std::make_unique<sg::MockBackend>(options, std::move(labels));
}

std::shared_ptr<sg::EmbeddingCache> make_cache(const BackendFlags& f) {
  if (f.cache.empty()) return nullptr;
  return std::make_shared<sg::EmbeddingCache>(f.cache);
}

sg::Dataset load_dataset_reporting(const std::string& path) {
  auto dataset = sg::load_dataset(path);
  for (const auto& e : dataset.errors)
    std::cerr << path << ":" << e.line << ": " << sg::to_string(e.code) << ": " << e.message << "\n";
  return dataset;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw sg::Error(sg::ErrorCode::kIoError, "cannot write " + path);
  out << text;
}

// parse

struct ParseFlags {
  SourceFlags source;
  std::vector<std::string> captions;
  std::string dataset;
  std::string out;
};

int run_parse(const ParseFlags& f) {
  auto llm = make_source(f.source);
  const auto tmpl = load_template(f.source);
  std::vector<std::string> captions = f.captions;
  sg::PhraseMode mode = f.source.phrase_mode == "person" ? sg::PhraseMode::kPersonTemplate
                                                         : sg::PhraseMode::kFullSentence;
  if (!f.dataset.empty()) {
    const auto dataset = load_dataset_reporting(f.dataset);
    for (const auto& r : dataset.rec) captions.push_back(r.expression);
    for (const auto& r : dataset.links) captions.push_back(sg::index_name_slots(r.caption));
    if (dataset.header.kind == sg::DatasetKind::kLinks && f.source.phrase_mode.empty())
      mode = sg::PhraseMode::kPersonTemplate;
  }
  if (captions.empty()) throw sg::Error(sg::ErrorCode::kConfigError, "nothing to parse");
  std::string out;
  int status = kExitOk;
  for (const auto& caption : captions) {
    try {
      out += sg::to_json(sg::parse_caption(caption, *llm, tmpl, mode)).dump() + "\n";
    } catch (const sg::Error& e) {
      out += nlohmann::json{{"caption", caption}, {"error", e.what()}}.dump() + "\n";
      status = kExitRecordFailures;
    }
  }
  write_text(f.out, out);
  return status;
}

// ground

struct GroundFlags {
  SourceFlags source;
  BackendFlags backend;
  std::string dataset;
  std::string out;
  std::string report;
  std::string direction;
  std::string tta = "crop,blur";
  std::string selection = "argmax";
  std::string subject_text = "entity";
  std::string rules;
  std::string strategy = "triplets";
  double size_prior = 0.0;
  std::size_t workers = 1;
  bool no_spatial = false;
  bool no_self_restriction = false;
};

sg::SelectionMode parse_selection(const std::string& text) {
  if (text == "argmax") return sg::SelectionMode::argmax();
  if (text.rfind("threshold:", 0) == 0) {
    try {
      std::size_t used = 0;
      const auto body = text.substr(10);
      const double tau = std::stod(body, &used);
      if (used == body.size()) return sg::SelectionMode::at_least(tau);
    } catch (const std::exception&) {
    }
  }
  throw sg::Error(sg::ErrorCode::kConfigError, "bad --selection '" + text + "'");
}

int run_ground(const GroundFlags& f) {
  const auto dataset = load_dataset_reporting(f.dataset);
  auto config = sg::default_run_config(dataset.header.kind);
  if (f.direction == "text2image") config.ground.match.direction = sg::Direction::kTextToImage;
  if (f.direction == "image2text") config.ground.match.direction = sg::Direction::kImageToText;
  config.strategy = f.strategy == "score-and-rank" ? sg::Strategy::kScoreAndRank
                                                   : sg::Strategy::kTriplets;
  config.ground.match.selection = parse_selection(f.selection);
  config.ground.tta = sg::parse_render_modes(f.tta);
  config.ground.subject_text = f.subject_text == "caption" ? sg::SubjectTextSource::kWholeCaption
                                                           : sg::SubjectTextSource::kEntity;
  config.ground.self_triplets_use_self_relations = !f.no_self_restriction;
  if (f.source.phrase_mode == "person") config.phrase_mode = sg::PhraseMode::kPersonTemplate;
  if (f.source.phrase_mode == "full") config.phrase_mode = sg::PhraseMode::kFullSentence;
  config.size_prior = f.size_prior;
  config.workers = f.workers;
  config.seed = f.backend.seed;
  config.prompt = load_template(f.source);
  if (!f.rules.empty()) config.rules = sg::load_spatial_rules(f.rules);
  if (f.no_spatial) config.rules.clear();
  config.ground.match.validate();

  auto llm = make_source(f.source);
  auto backend = make_backend(f.backend);
  sg::EmbeddingGateway gateway(*backend, {f.backend.batch_size}, make_cache(f.backend));

  const auto output = sg::run_grounding(dataset, config, *llm, gateway);
  const auto predictions = output.predictions();
  sg::write_predictions(f.out, predictions);

  std::size_t fallbacks = 0;
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& r : output.records) {
    fallbacks += r.prediction.fallback ? 1 : 0;
    if (r.prediction.error) errors.push_back({{"record_id", r.prediction.record_id}, {"error", *r.prediction.error}});
  }
  for (const auto& e : dataset.errors)
    errors.push_back({{"line", e.line}, {"error", std::string(sg::to_string(e.code)) + ": " + e.message}});
  if (!f.report.empty()) {
    auto snapshot = config.snapshot();
    snapshot["backend"] = gateway.backend_name();
    snapshot["dimension"] = gateway.dimension();
    write_text(f.report, nlohmann::json{{"records", predictions.size()},
                                        {"failures", output.failures + dataset.errors.size()},
                                        {"fallbacks", fallbacks},
                                        {"errors", errors},
                                        {"config", snapshot}}
                             .dump(2) +
                             "\n");
  }
  std::cerr << "grounded " << predictions.size() << " records (" << fallbacks << " fallback, "
            << output.failures + dataset.errors.size() << " failed) in " << output.elapsed.count()
            << " ms\n";
  return output.failures + dataset.errors.size() > 0 ? kExitRecordFailures : kExitOk;
}

// eval

struct EvalFlags {
  std::string preds;
  std::string dataset;
  std::string metric = "rec@0.5";
  std::string report;
};

int run_eval(const EvalFlags& f) {
  const auto dataset = load_dataset_reporting(f.dataset);
  const auto predictions = sg::read_predictions(f.preds);
  sg::RunReport report;
  if (f.metric == "links") {
    if (dataset.header.kind != sg::DatasetKind::kLinks)
      throw sg::Error(sg::ErrorCode::kConfigError, "metric links needs a links dataset");
    report = sg::evaluate_links(predictions, dataset.links);
  } else if (f.metric.rfind("rec@", 0) == 0) {
    if (dataset.header.kind != sg::DatasetKind::kRec)
      throw sg::Error(sg::ErrorCode::kConfigError, "metric rec needs a rec dataset");
    double threshold = 0.0;
    try {
      threshold = std::stod(f.metric.substr(4));
    } catch (const std::exception&) {
      throw sg::Error(sg::ErrorCode::kConfigError, "bad --metric '" + f.metric + "'");
    }
    report = sg::evaluate_rec(predictions, dataset.rec, threshold);
  } else {
    throw sg::Error(sg::ErrorCode::kConfigError, "bad --metric '" + f.metric + "'");
  }
  std::size_t fallbacks = 0;
  for (const auto& p : predictions) fallbacks += p.fallback ? 1 : 0;
  report.config = {{"metric", f.metric}, {"fallbacks", fallbacks}};
  write_text(f.report, report.to_json().dump(2) + "\n");
  std::cerr << report.metric << ": " << report.correct << "/" << report.total << " = "
            << report.accuracy << "\n";
  return kExitOk;
}

// overlay

struct OverlayFlags {
  SourceFlags source;
  std::string dataset;
  std::string preds;
  std::string out_dir;
  std::string record;
};

int run_overlay(const OverlayFlags& f) {
  const auto dataset = load_dataset_reporting(f.dataset);
  if (dataset.header.kind != sg::DatasetKind::kRec)
    throw sg::Error(sg::ErrorCode::kConfigError, "overlay renders rec datasets");
  const auto predictions = sg::read_predictions(f.preds);
  std::unique_ptr<sg::CompletionSource> llm;
  if (!f.source.fixtures.empty() || !f.source.llm_url.empty()) llm = make_source(f.source);
  const auto tmpl = load_template(f.source);
  std::filesystem::create_directories(f.out_dir);
  std::size_t written = 0;
  for (const auto& p : predictions) {
    if (!f.record.empty() && p.record_id != f.record) continue;
    const auto it = std::find_if(dataset.rec.begin(), dataset.rec.end(),
                                 [&](const sg::RecRecord& r) { return r.id == p.record_id; });
    if (it == dataset.rec.end()) {
      std::cerr << "no record '" << p.record_id << "' in " << f.dataset << "\n";
      continue;
    }
    std::optional<sg::ParsedCaption> parsed;
    if (llm) {
      try {
        parsed = sg::parse_caption(it->expression, *llm, tmpl, sg::PhraseMode::kFullSentence);
      } catch (const sg::Error&) {
      }
    }
    write_text((std::filesystem::path(f.out_dir) / (p.record_id + ".svg")).string(),
               sg::render_overlay(*it, p, parsed));
    ++written;
  }
  std::cerr << "wrote " << written << " overlays to " << f.out_dir << "\n";
  return kExitOk;
}

// serve-mock

struct ServeFlags {
  std::string host = "127.0.0.1";
  int port = 8765;
  std::uint64_t seed = 0;
  std::size_t dimension = kDefaultMockDimension;
  std::string labels;
};

int run_serve(const ServeFlags& f) {
  sg::LabelBook labels;
  if (!f.labels.empty()) labels = sg::LabelBook::load(f.labels);
  sg::MockBackend backend({f.seed, f.dimension}, std::move(labels));
  sg::EmbeddingServer server(backend);
  int port = f.port;
  if (port == 0) {
    port = server.bind_any_port(f.host);
  } else if (!server.bind(f.host, port)) {
    throw sg::Error(sg::ErrorCode::kIoError, "cannot bind " + f.host + ":" + std::to_string(port));
  }
  std::cout << "serving " << backend.name() << " on http://" << f.host << ":" << port << std::endl;
  server.listen();
  return kExitOk;
}

// synth

struct SynthFlags {
  std::string out_dir;
  std::uint64_t seed = 7;
  std::size_t scenes = 20;
};

int run_synth(const SynthFlags& f) {
  sg::write_synthetic_suite(sg::make_synthetic_suite(f.seed, f.scenes), f.out_dir);
  std::cerr << "wrote " << f.scenes << " scenes to " << f.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-aware visual grounding"};
  app.set_config("--config", "", "TOML-style config file; flags given on the command line win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  ParseFlags parse;
  auto* parse_cmd = app.add_subcommand("parse", "Decompose captions into triplets");
  add_source_flags(parse_cmd, parse.source);
  parse_cmd->add_option("--caption", parse.captions, "Caption to parse (repeatable)");
  parse_cmd->add_option("--dataset", parse.dataset, "Parse every record of a dataset");
  parse_cmd->add_option("--out", parse.out, "Output JSONL (default stdout)");

  GroundFlags ground;
  auto* ground_cmd = app.add_subcommand("ground", "Ground a dataset and write predictions");
  add_source_flags(ground_cmd, ground.source);
  add_backend_flags(ground_cmd, ground.backend);
  ground_cmd->add_option("--dataset", ground.dataset, "Dataset JSONL")->required();
  ground_cmd->add_option("--out", ground.out, "Predictions JSONL")->required();
  ground_cmd->add_option("--report", ground.report, "Run summary JSON");
  ground_cmd->add_option("--direction", ground.direction, "text2image|image2text")
      ->check(CLI::IsMember({"text2image", "image2text"}));
  ground_cmd->add_option("--strategy", ground.strategy, "triplets|score-and-rank")
      ->check(CLI::IsMember({"triplets", "score-and-rank"}));
  ground_cmd->add_option("--tta", ground.tta, "Render modes, e.g. crop,blur");
  ground_cmd->add_option("--selection", ground.selection, "argmax or threshold:T");
  ground_cmd->add_option("--subject-text", ground.subject_text, "entity|caption")
      ->check(CLI::IsMember({"entity", "caption"}));
  ground_cmd->add_option("--rules", ground.rules, "Spatial rule table JSON");
  ground_cmd->add_flag("--no-spatial", ground.no_spatial, "Disable the spatial filter");
  ground_cmd->add_flag("--no-self-restriction", ground.no_self_restriction,
                       "Let self-referential triplets match any box pair");
  ground_cmd->add_option("--size-prior", ground.size_prior, "Drop boxes below this image fraction")
      ->check(CLI::Range(0.0, 0.999999));
  ground_cmd->add_option("--workers", ground.workers, "Worker threads")->check(CLI::PositiveNumber);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a dataset");
  eval_cmd->add_option("--preds", eval.preds, "Predictions JSONL")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "Dataset JSONL")->required();
  eval_cmd->add_option("--metric", eval.metric, "rec@T or links");
  eval_cmd->add_option("--report", eval.report, "Report JSON (default stdout)");

  OverlayFlags overlay;
  auto* overlay_cmd = app.add_subcommand("overlay", "Render SVG overlays of predictions");
  add_source_flags(overlay_cmd, overlay.source);
  overlay_cmd->add_option("--dataset", overlay.dataset, "Dataset JSONL")->required();
  overlay_cmd->add_option("--preds", overlay.preds, "Predictions JSONL")->required();
  overlay_cmd->add_option("--out-dir", overlay.out_dir, "Directory for SVG files")->required();
  overlay_cmd->add_option("--record", overlay.record, "Only this record id");

  ServeFlags serve;
  auto* serve_cmd = app.add_subcommand("serve-mock", "Serve the mock backend over HTTP");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--seed", serve.seed, "Mock seed");
  serve_cmd->add_option("--dim", serve.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--labels", serve.labels, "Label book JSON");

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic labeled-mock suite");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--scenes", synth.scenes, "Number of scenes")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFatal;
  }

  try {
    if (*parse_cmd) return run_parse(parse);
    if (*ground_cmd) return run_ground(ground);
    if (*eval_cmd) return run_eval(eval);
    if (*overlay_cmd) return run_overlay(overlay);
    if (*serve_cmd) return run_serve(serve);
    if (*synth_cmd) return run_synth(synth);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitFatal;
}
