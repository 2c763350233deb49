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

// JSON-over-HTTP embedding protocol.
//
//   GET  /v1/info         -> {"name": str, "dimension": int}
//   POST /v1/embed/text   {"texts": [str, ...]} -> {"vectors": [[float, ...], ...]}
//   POST /v1/embed/region {"image": {"id", "uri", "width", "height"},
//                          "requests": [{"boxes": [[x0,y0,x1,y1], ...], "render": "crop"|"blur"}]}
//                         -> {"vectors": [...]}
//
// Vectors come back in request order and are not required to be normalized;
// normalization is the client's job. Invalid regions answer 400 with
// {"error": str}; a backend that cannot serve answers 503.

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "structground/embedding.hpp"

namespace structground {

nlohmann::json image_to_json(const ImageRef& image);
ImageRef image_from_json(const nlohmann::json& doc);
nlohmann::json region_request_body(const ImageRef& image, std::span<const RegionSpec> regions);

struct HttpBackendOptions {
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
};

// Client side. The constructor performs the /v1/info handshake and throws
// kBackendUnavailable when the server cannot be reached.
class HttpBackend : public EmbeddingBackend {
 public:
  explicit HttpBackend(std::string base_url, HttpBackendOptions options = {});
  ~HttpBackend() override;

  std::string name() const override;
  std::size_t dimension() const override;
  std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) override;
  std::vector<std::vector<double>> embed_regions(const ImageRef& image,
                                                 std::span<const RegionSpec> regions) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Serves any EmbeddingBackend over the protocol. Used by `serve-mock` and by
// the protocol tests.
class EmbeddingServer {
 public:
  explicit EmbeddingServer(EmbeddingBackend& backend);
  ~EmbeddingServer();

  // Binds to an ephemeral port and returns it.
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  // Blocks until stop() is called.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace structground
