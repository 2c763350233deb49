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

// Caption -> textual triplets. A four-part prompt is sent to a completion
// source (a live LLM endpoint or a replay fixture store), the completion is
// validated against a line grammar, and the degenerate-slot rules are applied.
//
// Completion grammar, one triplet per line:
//
//   (subject | predicate | object)
//
// Predicate and object may be empty. A completion consisting of the single
// line `NONE` means the caption yields no triplets.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "structground/model.hpp"

namespace structground {

struct PromptExample {
  std::string caption;
  std::vector<std::string> triplet_lines;

  friend bool operator==(const PromptExample&, const PromptExample&) = default;
};

struct PromptTemplate {
  std::string general_instruction;
  std::string supporting_details;
  std::vector<PromptExample> icl_examples;
  std::string task_instruction_prefix;

  // Throws kConfigError when a part is empty or there are no examples.
  void validate() const;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

// Template files are plain text split by the headers
//   ### GENERAL INSTRUCTION / ### SUPPORTING DETAILS / ### EXAMPLES /
//   ### TASK INSTRUCTION
// Inside EXAMPLES, each example starts with a `Caption:` line followed by
// its triplet lines.
PromptTemplate parse_prompt_template(std::string_view text);
PromptTemplate load_prompt_template(const std::filesystem::path& path);
std::string format_prompt_template(const PromptTemplate& tmpl);

// Built-in template for referring expressions.
PromptTemplate default_prompt_template();

std::string build_prompt(const PromptTemplate& tmpl, std::string_view caption);

// Suffix appended to the prompt on the single format retry.
extern const std::string_view kFormatReminder;

struct RawTriple {
  std::string subject;
  std::string predicate;
  std::string object;

  friend bool operator==(const RawTriple&, const RawTriple&) = default;
};

// All-or-nothing: any non-blank line outside the grammar raises kFormatError
// naming its 1-based line number.
std::vector<RawTriple> parse_completion(std::string_view raw);

struct FilledTriple {
  RawTriple triple;
  FilledSlots filled;
};

FilledTriple fill_degenerate(RawTriple triple);

enum class PhraseMode { kFullSentence, kPersonTemplate };

std::string compose_predicate_phrase(const TextTriplet& triplet, PhraseMode mode);

class CompletionSource {
 public:
  virtual ~CompletionSource() = default;
  // `caption` is the lookup key for replay stores; live clients send `prompt`.
  virtual std::string complete(std::string_view caption, std::string_view prompt) = 0;
};

// JSONL fixture store: {"caption": str, "completion": str} per line.
class ReplayStore : public CompletionSource {
 public:
  ReplayStore() = default;

  static ReplayStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // A caption may be added twice only with the same completion.
  void add(std::string caption, std::string completion);
  bool contains(std::string_view caption) const;
  std::size_t size() const { return records_.size(); }

  std::string complete(std::string_view caption, std::string_view prompt) override;

 private:
  std::map<std::string, std::string, std::less<>> records_;
  std::vector<std::string> order_;
};

struct LlmClientOptions {
  std::string url;  // e.g. http://localhost:8000/v1/complete
  std::string model = "gpt-3.5-turbo";
  int max_tokens = 256;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;
};

// POST {model, prompt, max_tokens, temperature: 0} -> {completion}.
class HttpLlmClient : public CompletionSource {
 public:
  explicit HttpLlmClient(LlmClientOptions options);
  ~HttpLlmClient() override;

  std::string complete(std::string_view caption, std::string_view prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ParsedCaption {
  std::string caption;
  std::vector<TextEntity> entities;
  std::vector<TextTriplet> triplets;
  std::string raw_completion;

  friend bool operator==(const ParsedCaption&, const ParsedCaption&) = default;
};

// Builds the entity table and triplets from validated raw triples. Split out
// of parse_caption so fixtures and tests can skip the completion step.
ParsedCaption assemble_parsed_caption(std::string_view caption,
                                      const std::vector<RawTriple>& triples,
                                      PhraseMode mode);

ParsedCaption parse_caption(std::string_view caption, CompletionSource& llm,
                            const PromptTemplate& tmpl, PhraseMode mode);

nlohmann::json to_json(const ParsedCaption& parsed);
std::string format_triplet(const TextTriplet& triplet);

}  // namespace structground
