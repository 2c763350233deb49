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

#include <fstream>

#include "structground/embedding_http.hpp"
#include "structground/harness.hpp"

namespace structground {

namespace {

BBox read_box(const nlohmann::json& j, BoxFormat format) {
  if (!j.is_array() || j.size() != 4)
    throw Error(ErrorCode::kValidationError, "a box needs exactly four numbers");
  const double a = j.at(0).get<double>();
  const double b = j.at(1).get<double>();
  const double c = j.at(2).get<double>();
  const double d = j.at(3).get<double>();
  try {
    return format == BoxFormat::kXywh ? BBox::from_xywh(a, b, c, d) : BBox::checked(a, b, c, d);
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidationError, e.what());
  }
}

nlohmann::json box_json(const BBox& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

nlohmann::json record_image_json(const ImageRef& image) {
  nlohmann::json j{{"id", image.id}, {"width", image.width}, {"height", image.height}};
  if (image.uri) j["uri"] = *image.uri;
  return j;
}

std::vector<BBox> read_proposals(const nlohmann::json& j, BoxFormat format, const ImageRef& image) {
  std::vector<BBox> boxes;
  for (const auto& item : j) {
    auto box = read_box(item, format);
    if (!box.within(image))
      throw Error(ErrorCode::kValidationError, "proposal outside image " + image.id);
    boxes.push_back(box);
  }
  if (boxes.empty()) throw Error(ErrorCode::kValidationError, "record has no proposals");
  return boxes;
}

DatasetHeader parse_header(const std::string& line) {
  DatasetHeader header;
  try {
    const auto doc = nlohmann::json::parse(line);
    if (doc.at("schema").get<std::string>() != kDatasetSchema)
      throw Error(ErrorCode::kParseError, "unsupported dataset schema");
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "rec") header.kind = DatasetKind::kRec;
    else if (kind == "links") header.kind = DatasetKind::kLinks;
    else throw Error(ErrorCode::kParseError, "unknown dataset kind '" + kind + "'");
    const auto fmt = doc.value("box_format", std::string("xyxy"));
    if (fmt == "xyxy") header.box_format = BoxFormat::kXyxy;
    else if (fmt == "xywh") header.box_format = BoxFormat::kXywh;
    else throw Error(ErrorCode::kParseError, "unknown box format '" + fmt + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("dataset header: ") + e.what());
  }
  return header;
}

RecRecord parse_rec(const nlohmann::json& doc, BoxFormat format) {
  RecRecord r;
  r.id = doc.at("id").get<std::string>();
  r.image = image_from_json(doc.at("image"));
  r.expression = doc.at("expression").get<std::string>();
  if (r.expression.empty()) throw Error(ErrorCode::kValidationError, "empty expression");
  r.proposals = read_proposals(doc.at("proposals"), format, r.image);
  r.gt_box = read_box(doc.at("gt_box"), format);
  if (!r.gt_box.within(r.image))
    throw Error(ErrorCode::kValidationError, "gt box outside image " + r.image.id);
  return r;
}

LinkRecord parse_link(const nlohmann::json& doc, BoxFormat format) {
  LinkRecord r;
  r.id = doc.at("id").get<std::string>();
  r.image = image_from_json(doc.at("image"));
  r.caption = doc.at("caption").get<std::string>();
  r.name_slots = find_name_slots(r.caption);
  if (r.name_slots.empty()) throw Error(ErrorCode::kValidationError, "caption has no [NAME] slot");
  r.proposals = read_proposals(doc.at("proposals"), format, r.image);
  for (const auto& link : doc.at("gt_links")) {
    const auto slot = link.at(0).get<std::size_t>();
    const auto box = link.at(1).get<std::size_t>();
    if (slot >= r.name_slots.size() || box >= r.proposals.size())
      throw Error(ErrorCode::kValidationError, "gt link out of range");
    r.gt_links.emplace_back(slot, box);
  }
  return r;
}

}  // namespace

std::vector<std::size_t> find_name_slots(std::string_view caption) {
  std::vector<std::size_t> slots;
  for (auto pos = caption.find(kNamePlaceholder); pos != std::string_view::npos;
       pos = caption.find(kNamePlaceholder, pos + kNamePlaceholder.size())) {
    slots.push_back(pos);
  }
  return slots;
}

std::string index_name_slots(std::string_view caption) {
  std::string out;
  std::size_t last = 0;
  std::size_t slot = 0;
  for (const auto pos : find_name_slots(caption)) {
    out.append(caption.substr(last, pos - last));
    out.append("[NAME_").append(std::to_string(slot++)).append("]");
    last = pos + kNamePlaceholder.size();
  }
  out.append(caption.substr(last));
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read dataset " + path.string());
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!have_header) {
      dataset.header = parse_header(line);
      have_header = true;
      continue;
    }
    try {
      const auto doc = nlohmann::json::parse(line);
      if (dataset.header.kind == DatasetKind::kRec)
        dataset.rec.push_back(parse_rec(doc, dataset.header.box_format));
      else
        dataset.links.push_back(parse_link(doc, dataset.header.box_format));
    } catch (const nlohmann::json::parse_error& e) {
      dataset.errors.push_back({line_no, ErrorCode::kParseError, e.what()});
    } catch (const nlohmann::json::exception& e) {
      dataset.errors.push_back({line_no, ErrorCode::kValidationError, e.what()});
    } catch (const Error& e) {
      dataset.errors.push_back({line_no, ErrorCode::kValidationError, e.what()});
    }
  }
  if (!have_header) throw Error(ErrorCode::kParseError, path.string() + ": missing header line");
  return dataset;
}

namespace {

void throw_first_error(const std::filesystem::path& path, const Dataset& dataset) {
  if (dataset.errors.empty()) return;
  const auto& e = dataset.errors.front();
  throw Error(e.code, path.string() + ":" + std::to_string(e.line) + ": " + e.message);
}

}  // namespace

std::vector<RecRecord> load_rec_dataset(const std::filesystem::path& path) {
  auto dataset = load_dataset(path);
  if (dataset.header.kind != DatasetKind::kRec)
    throw Error(ErrorCode::kParseError, path.string() + " is not a rec dataset");
  throw_first_error(path, dataset);
  return std::move(dataset.rec);
}

std::vector<LinkRecord> load_link_dataset(const std::filesystem::path& path) {
  auto dataset = load_dataset(path);
  if (dataset.header.kind != DatasetKind::kLinks)
    throw Error(ErrorCode::kParseError, path.string() + " is not a links dataset");
  throw_first_error(path, dataset);
  return std::move(dataset.links);
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write dataset " + path.string());
  const bool rec = dataset.header.kind == DatasetKind::kRec;
  out << nlohmann::json{{"schema", kDatasetSchema},
                        {"kind", rec ? "rec" : "links"},
                        {"box_format", "xyxy"}}
             .dump()
      << '\n';
  const auto proposals_json = [](const std::vector<BBox>& boxes) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& b : boxes) j.push_back(box_json(b));
    return j;
  };
  if (rec) {
    for (const auto& r : dataset.rec) {
      out << nlohmann::json{{"id", r.id},
                            {"image", record_image_json(r.image)},
                            {"expression", r.expression},
                            {"proposals", proposals_json(r.proposals)},
                            {"gt_box", box_json(r.gt_box)}}
                 .dump()
          << '\n';
    }
  } else {
    for (const auto& r : dataset.links) {
      out << nlohmann::json{{"id", r.id},
                            {"image", record_image_json(r.image)},
                            {"caption", r.caption},
                            {"proposals", proposals_json(r.proposals)},
                            {"gt_links", r.gt_links}}
                 .dump()
          << '\n';
    }
  }
}

}  // namespace structground
