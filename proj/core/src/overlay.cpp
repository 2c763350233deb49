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

#include "structground/overlay.hpp"

#include <sstream>

namespace structground {

namespace {

std::string escape_xml(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

void rect(std::ostringstream& svg, const BBox& b, std::string_view cls) {
  svg << "  <rect class=\"" << cls << "\" x=\"" << b.x_min << "\" y=\"" << b.y_min
      << "\" width=\"" << b.width() << "\" height=\"" << b.height() << "\"/>\n";
}

constexpr int kLineHeight = 18;

}  // namespace

std::string render_overlay(const RecRecord& record, const Prediction& prediction,
                           const std::optional<ParsedCaption>& parsed) {
  const int w = record.image.width;
  const int h = record.image.height;
  const std::size_t lines = 1 + (parsed ? parsed->triplets.size() : 0);
  const int total_h = h + static_cast<int>(lines) * kLineHeight + 8;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" "
      << "width=\"" << w << "\" height=\"" << total_h << "\">\n";
  svg << "  <style>rect{fill:none;stroke-width:2}.proposal{stroke:#999;stroke-dasharray:4 2}"
      << ".gt{stroke:#2060ff}.correct{stroke:#10a040}.incorrect{stroke:#e03020}"
      << "text{font:13px sans-serif}</style>\n";
  if (record.image.uri) {
    svg << "  <image href=\"" << escape_xml(*record.image.uri) << "\" x=\"0\" y=\"0\" width=\"" << w
        << "\" height=\"" << h << "\"/>\n";
  } else {
    svg << "  <rect class=\"canvas\" x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
        << "\" style=\"fill:#f4f4f4;stroke:none\"/>\n";
  }

  const std::optional<BBox> top =
      prediction.boxes.empty() ? std::nullopt : prediction.boxes.front();
  for (const auto& b : record.proposals) {
    if (top && b == *top) continue;
    rect(svg, b, "proposal");
  }
  rect(svg, record.gt_box, "gt");
  if (top) rect(svg, *top, iou(*top, record.gt_box) > 0.5 ? "correct" : "incorrect");

  int y = h + kLineHeight;
  svg << "  <text x=\"4\" y=\"" << y << "\">" << escape_xml(record.expression)
      << (prediction.fallback ? " [fallback]" : "") << "</text>\n";
  if (parsed) {
    for (const auto& t : parsed->triplets) {
      y += kLineHeight;
      svg << "  <text class=\"triplet\" x=\"4\" y=\"" << y << "\">" << escape_xml(format_triplet(t))
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace structground
