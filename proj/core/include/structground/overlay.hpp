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

// SVG rendering of a grounded record for visual inspection.

#include <optional>
#include <string>

#include "structground/caption_parsing.hpp"
#include "structground/harness.hpp"

namespace structground {

// Ground truth is drawn with class "gt", the top prediction with class
// "correct" or "incorrect" (IoU > 0.5), other proposals with class
// "proposal". Parsed triplets are listed under the image. The image is
// referenced by its uri when present, otherwise a blank canvas of the image
// size is drawn.
std::string render_overlay(const RecRecord& record, const Prediction& prediction,
                           const std::optional<ParsedCaption>& parsed = std::nullopt);

}  // namespace structground
