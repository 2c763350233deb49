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

#include "structground/caption_parsing.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace structground {

namespace {

constexpr std::string_view kGeneralHeader = "### GENERAL INSTRUCTION";
constexpr std::string_view kDetailsHeader = "### SUPPORTING DETAILS";
constexpr std::string_view kExamplesHeader = "### EXAMPLES";
constexpr std::string_view kTaskHeader = "### TASK INSTRUCTION";
constexpr std::string_view kCaptionLabel = "Caption:";
constexpr std::string_view kTripletsLabel = "Triplets:";
constexpr std::string_view kNoneLine = "NONE";

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string join_trimmed(const std::vector<std::string_view>& lines) {
  std::size_t first = 0;
  std::size_t last = lines.size();
  while (first < last && trim(lines[first]).empty()) ++first;
  while (last > first && trim(lines[last - 1]).empty()) --last;
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    if (i > first) out += '\n';
    out += lines[i];
  }
  return out;
}

std::vector<PromptExample> parse_examples(const std::vector<std::string_view>& lines) {
  std::vector<PromptExample> examples;
  for (auto line : lines) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.starts_with(kCaptionLabel)) {
      examples.push_back({std::string(trim(t.substr(kCaptionLabel.size()))), {}});
    } else if (t == kTripletsLabel) {
      continue;
    } else {
      if (examples.empty())
        throw Error(ErrorCode::kConfigError, "example triplet line before any 'Caption:' line");
      examples.back().triplet_lines.emplace_back(t);
    }
  }
  return examples;
}

}  // namespace

const std::string_view kFormatReminder =
    "\n\nReminder: answer with one triplet per line in the exact form "
    "(subject | predicate | object), or the single line NONE. "
    "Do not add any other text.\n";

void PromptTemplate::validate() const {
  if (trim(general_instruction).empty())
    throw Error(ErrorCode::kConfigError, "prompt template: empty general instruction");
  if (trim(supporting_details).empty())
    throw Error(ErrorCode::kConfigError, "prompt template: empty supporting details");
  if (trim(task_instruction_prefix).empty())
    throw Error(ErrorCode::kConfigError, "prompt template: empty task instruction");
  if (icl_examples.empty())
    throw Error(ErrorCode::kConfigError, "prompt template: needs at least one example");
  for (const auto& ex : icl_examples) {
    if (trim(ex.caption).empty() || ex.triplet_lines.empty())
      throw Error(ErrorCode::kConfigError, "prompt template: incomplete example");
  }
}

PromptTemplate parse_prompt_template(std::string_view text) {
  enum class Section { kNone, kGeneral, kDetails, kExamples, kTask };
  Section current = Section::kNone;
  std::map<Section, std::vector<std::string_view>> sections;
  for (auto line : split_lines(text)) {
    const auto t = trim(line);
    if (t == kGeneralHeader) {
      current = Section::kGeneral;
    } else if (t == kDetailsHeader) {
      current = Section::kDetails;
    } else if (t == kExamplesHeader) {
      current = Section::kExamples;
    } else if (t == kTaskHeader) {
      current = Section::kTask;
    } else if (current == Section::kNone) {
      if (!t.empty()) throw Error(ErrorCode::kConfigError, "prompt template: text before first header");
    } else {
      sections[current].push_back(line);
    }
  }
  PromptTemplate tmpl;
  tmpl.general_instruction = join_trimmed(sections[Section::kGeneral]);
  tmpl.supporting_details = join_trimmed(sections[Section::kDetails]);
  tmpl.icl_examples = parse_examples(sections[Section::kExamples]);
  tmpl.task_instruction_prefix = join_trimmed(sections[Section::kTask]);
  tmpl.validate();
  return tmpl;
}

PromptTemplate load_prompt_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read prompt template " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_prompt_template(buffer.str());
}

std::string format_prompt_template(const PromptTemplate& tmpl) {
  std::string out;
  out.append(kGeneralHeader).append("\n").append(tmpl.general_instruction).append("\n\n");
  out.append(kDetailsHeader).append("\n").append(tmpl.supporting_details).append("\n\n");
  out.append(kExamplesHeader).append("\n");
  for (const auto& ex : tmpl.icl_examples) {
    out.append(kCaptionLabel).append(" ").append(ex.caption).append("\n");
    for (const auto& line : ex.triplet_lines) out.append(line).append("\n");
    out.append("\n");
  }
  out.append(kTaskHeader).append("\n").append(tmpl.task_instruction_prefix).append("\n");
  return out;
}

PromptTemplate default_prompt_template() {
  PromptTemplate tmpl;
  tmpl.general_instruction =
      "You decompose a referring expression that describes one region of an image into "
      "(subject, predicate, object) triplets.";
  tmpl.supporting_details =
      "Output one triplet per line in the form (subject | predicate | object).\n"
      "The subject of the first triplet must be the entity the expression refers to.\n"
      "Keep attributes such as color or size inside the subject or object phrase.\n"
      "Use the same phrase every time the same entity is mentioned.\n"
      "If the expression names a single entity with no relation, leave predicate and object "
      "empty, e.g. (red apple | | ).\n"
      "If the expression contains no entity at all, answer with the single line NONE.\n"
      "Do not write anything besides the triplet lines.";
  tmpl.icl_examples = {
      {"the cat sitting on the laptop", {"(cat | sitting on | laptop)"}},
      {"man in a blue shirt holding an umbrella next to the bus",
       {"(man in a blue shirt | holding | umbrella)", "(man in a blue shirt | next to | bus)"}},
      {"red apple", {"(red apple | | )"}},
      {"person walking", {"(person | walking | )"}},
  };
  tmpl.task_instruction_prefix = "Now decompose the following expression.";
  return tmpl;
}

std::string build_prompt(const PromptTemplate& tmpl, std::string_view caption) {
  if (trim(caption).empty()) throw Error(ErrorCode::kEmptyCaption, "caption is empty");
  std::string prompt;
  prompt.append(tmpl.general_instruction).append("\n\n");
  prompt.append(tmpl.supporting_details).append("\n\n");
  for (const auto& ex : tmpl.icl_examples) {
    prompt.append(kCaptionLabel).append(" ").append(ex.caption).append("\n");
    prompt.append(kTripletsLabel).append("\n");
    for (const auto& line : ex.triplet_lines) prompt.append(line).append("\n");
    prompt.append("\n");
  }
  prompt.append(tmpl.task_instruction_prefix).append("\n");
  prompt.append(kCaptionLabel).append(" ").append(caption).append("\n");
  prompt.append(kTripletsLabel).append("\n");
  return prompt;
}

std::vector<RawTriple> parse_completion(std::string_view raw) {
  const auto lines = split_lines(raw);
  std::vector<RawTriple> out;
  std::size_t nonblank = 0;
  bool saw_none = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    ++nonblank;
    const auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kFormatError,
                   "completion line " + std::to_string(i + 1) + ": " + why + ": '" +
                       std::string(line) + "'");
    };
    if (line == kNoneLine) {
      saw_none = true;
      continue;
    }
    if (line.size() < 2 || line.front() != '(' || line.back() != ')')
      throw fail("expected a parenthesized triplet");
    const auto body = line.substr(1, line.size() - 2);
    const auto p1 = body.find('|');
    const auto p2 = p1 == std::string_view::npos ? p1 : body.find('|', p1 + 1);
    if (p2 == std::string_view::npos || body.find('|', p2 + 1) != std::string_view::npos)
      throw fail("expected exactly three '|'-separated fields");
    RawTriple triple{std::string(trim(body.substr(0, p1))),
                     std::string(trim(body.substr(p1 + 1, p2 - p1 - 1))),
                     std::string(trim(body.substr(p2 + 1)))};
    if (triple.subject.empty()) throw fail("empty subject");
    out.push_back(std::move(triple));
  }
  if (saw_none) {
    if (nonblank != 1)
      throw Error(ErrorCode::kFormatError, "completion mixes NONE with triplet lines");
    return {};
  }
  if (out.empty()) throw Error(ErrorCode::kFormatError, "completion line 1: no triplet lines");
  return out;
}

FilledTriple fill_degenerate(RawTriple triple) {
  if (trim(triple.subject).empty())
    throw Error(ErrorCode::kEmptySubject, "triplet has an empty subject");
  FilledSlots filled;
  if (trim(triple.predicate).empty()) {
    triple.predicate = triple.subject;
    filled.predicate = true;
  }
  if (trim(triple.object).empty()) {
    triple.object = triple.subject;
    filled.object = true;
  }
  return {std::move(triple), filled};
}

std::string compose_predicate_phrase(const TextTriplet& triplet, PhraseMode mode) {
  switch (mode) {
    case PhraseMode::kPersonTemplate:
      return "a person " + triplet.predicate_text + " a person";
    case PhraseMode::kFullSentence:
      break;
  }
  return triplet.subject_text + " " + triplet.predicate_text + " " + triplet.object_text;
}

ReplayStore ReplayStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read fixture store " + path.string());
  ReplayStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      store.add(record.at("caption").get<std::string>(),
                record.at("completion").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

void ReplayStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write fixture store " + path.string());
  for (const auto& caption : order_) {
    out << nlohmann::json{{"caption", caption}, {"completion", records_.find(caption)->second}}
               .dump()
        << '\n';
  }
}

void ReplayStore::add(std::string caption, std::string completion) {
  const auto it = records_.find(caption);
  if (it != records_.end()) {
    if (it->second != completion)
      throw Error(ErrorCode::kValidationError, "conflicting fixtures for caption '" + caption + "'");
    return;
  }
  order_.push_back(caption);
  records_.emplace(std::move(caption), std::move(completion));
}

bool ReplayStore::contains(std::string_view caption) const {
  return records_.find(caption) != records_.end();
}

std::string ReplayStore::complete(std::string_view caption, std::string_view /*prompt*/) {
  const auto it = records_.find(caption);
  if (it == records_.end())
    throw Error(ErrorCode::kReplayMiss, "no fixture for caption '" + std::string(caption) + "'");
  return it->second;
}

ParsedCaption assemble_parsed_caption(std::string_view caption,
                                      const std::vector<RawTriple>& triples,
                                      PhraseMode mode) {
  ParsedCaption parsed;
  parsed.caption = std::string(caption);
  const auto lowered_caption = to_lower(caption);

  std::map<std::string, std::size_t, std::less<>> ids;
  const auto add_entity = [&](const std::string& surface) {
    const std::size_t id = parsed.entities.size();
    parsed.entities.push_back(
        {id, surface, lowered_caption.find(to_lower(surface)) != std::string::npos});
    return id;
  };
  const auto entity_for = [&](const std::string& surface) {
    const auto it = ids.find(surface);
    if (it != ids.end()) return it->second;
    const auto id = add_entity(surface);
    ids.emplace(surface, id);
    return id;
  };

  for (const auto& raw : triples) {
    auto [triple, filled] = fill_degenerate(raw);
    TextTriplet t;
    t.subject_text = triple.subject;
    t.predicate_text = triple.predicate;
    t.object_text = triple.object;
    t.filled = filled;
    t.subject_id = entity_for(t.subject_text);
    if (filled.object) {
      t.object_id = t.subject_id;
    } else if (t.object_text == t.subject_text) {
      // "cat chasing cat": two distinct entities that share a surface. The
      // object gets its own id; later mentions resolve to the first one.
      t.object_id = add_entity(t.object_text);
    } else {
      t.object_id = entity_for(t.object_text);
    }
    // A synthesized predicate is the subject phrase itself; composing it into
    // "apple apple apple" would only add noise to a single-entity match.
    t.predicate_phrase = filled.predicate ? t.subject_text : compose_predicate_phrase(t, mode);
    parsed.triplets.push_back(std::move(t));
  }
  return parsed;
}

ParsedCaption parse_caption(std::string_view caption, CompletionSource& llm,
                            const PromptTemplate& tmpl, PhraseMode mode) {
  const auto prompt = build_prompt(tmpl, caption);
  auto completion = llm.complete(caption, prompt);
  std::vector<RawTriple> triples;
  try {
    triples = parse_completion(completion);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFormatError) throw;
    completion = llm.complete(caption, prompt + std::string(kFormatReminder));
    triples = parse_completion(completion);
  }
  auto parsed = assemble_parsed_caption(caption, triples, mode);
  parsed.raw_completion = std::move(completion);
  return parsed;
}

std::string format_triplet(const TextTriplet& t) {
  return "(" + t.subject_text + " | " + t.predicate_text + " | " + t.object_text + ")";
}

nlohmann::json to_json(const ParsedCaption& parsed) {
  nlohmann::json entities = nlohmann::json::array();
  for (const auto& e : parsed.entities) {
    entities.push_back({{"id", e.id}, {"surface", e.surface}, {"verbatim", e.verbatim}});
  }
  nlohmann::json triplets = nlohmann::json::array();
  for (const auto& t : parsed.triplets) {
    nlohmann::json filled = nlohmann::json::array();
    if (t.filled.predicate) filled.push_back("predicate");
    if (t.filled.object) filled.push_back("object");
    triplets.push_back({{"subject_id", t.subject_id},
                        {"object_id", t.object_id},
                        {"subject", t.subject_text},
                        {"predicate", t.predicate_text},
                        {"object", t.object_text},
                        {"predicate_phrase", t.predicate_phrase},
                        {"filled_slots", filled}});
  }
  return {{"caption", parsed.caption},
          {"entities", entities},
          {"triplets", triplets},
          {"raw_completion", parsed.raw_completion}};
}

}  // namespace structground
