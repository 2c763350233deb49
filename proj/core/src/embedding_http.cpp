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

#include "structground/embedding_http.hpp"

#include <mutex>
#include <semaphore>

#include <httplib.h>

#include "http_util.hpp"

namespace structground {

nlohmann::json image_to_json(const ImageRef& image) {
  return {{"id", image.id},
          {"uri", image.uri.value_or("")},
          {"width", image.width},
          {"height", image.height}};
}

ImageRef image_from_json(const nlohmann::json& doc) {
  ImageRef image;
  image.id = doc.at("id").get<std::string>();
  image.width = doc.at("width").get<int>();
  image.height = doc.at("height").get<int>();
  if (doc.contains("uri") && doc["uri"].is_string() && !doc["uri"].get<std::string>().empty())
    image.uri = doc["uri"].get<std::string>();
  if (!image.is_valid())
    throw Error(ErrorCode::kValidationError, "image " + image.id + " has non-positive size");
  return image;
}

nlohmann::json region_request_body(const ImageRef& image, std::span<const RegionSpec> regions) {
  nlohmann::json requests = nlohmann::json::array();
  for (const auto& r : regions) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : r.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    requests.push_back({{"boxes", boxes}, {"render", to_string(r.render)}});
  }
  return {{"image", image_to_json(image)}, {"requests", requests}};
}

namespace {

std::vector<std::vector<double>> parse_vectors(const std::string& body) {
  try {
    return nlohmann::json::parse(body).at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBackendUnavailable, std::string("malformed vectors response: ") + e.what());
  }
}

std::string error_message(const httplib::Result& res) {
  try {
    return nlohmann::json::parse(res->body).at("error").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return res->body;
  }
}

}  // namespace

// --- client -----------------------------------------------------------------

struct HttpBackend::Impl {
  detail::SplitUrl url;
  HttpBackendOptions options;
  std::counting_semaphore<> in_flight;
  std::string name;
  std::size_t dimension = 0;

  Impl(std::string base_url, HttpBackendOptions opts)
      : url(detail::split_url(base_url)),
        options(opts),
        in_flight(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, opts.max_in_flight))) {
    while (!url.path.empty() && url.path.back() == '/') url.path.pop_back();
  }

  httplib::Result send(const std::string& method, const std::string& path,
                       const std::string& body) {
    in_flight.acquire();
    detail::SemaphoreRelease release{in_flight};
    httplib::Client client(url.base);
    detail::apply_timeout(client, options.timeout);
    auto res = method == "GET" ? client.Get(url.path + path)
                               : client.Post(url.path + path, body, "application/json");
    if (!res) {
      throw Error(ErrorCode::kBackendUnavailable,
                  url.base + url.path + path + ": " + httplib::to_string(res.error()));
    }
    if (res->status == 400) throw Error(ErrorCode::kInvalidRegion, error_message(res));
    if (res->status != 200) {
      throw Error(ErrorCode::kBackendUnavailable,
                  "HTTP " + std::to_string(res->status) + ": " + error_message(res));
    }
    return res;
  }
};

HttpBackend::HttpBackend(std::string base_url, HttpBackendOptions options)
    : impl_(std::make_unique<Impl>(std::move(base_url), options)) {
  auto res = impl_->send("GET", "/v1/info", "");
  try {
    const auto info = nlohmann::json::parse(res->body);
    impl_->name = info.at("name").get<std::string>();
    impl_->dimension = info.at("dimension").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBackendUnavailable, std::string("malformed /v1/info: ") + e.what());
  }
  if (impl_->dimension == 0) throw Error(ErrorCode::kBackendUnavailable, "backend reports dimension 0");
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::name() const { return impl_->name; }
std::size_t HttpBackend::dimension() const { return impl_->dimension; }

std::vector<std::vector<double>> HttpBackend::embed_texts(std::span<const std::string> texts) {
  const nlohmann::json body{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  return parse_vectors(impl_->send("POST", "/v1/embed/text", body.dump())->body);
}

std::vector<std::vector<double>> HttpBackend::embed_regions(const ImageRef& image,
                                                            std::span<const RegionSpec> regions) {
  return parse_vectors(
      impl_->send("POST", "/v1/embed/region", region_request_body(image, regions).dump())->body);
}

// --- server -----------------------------------------------------------------

struct EmbeddingServer::Impl {
  EmbeddingBackend& backend;
  httplib::Server server;
  // Backends are not required to be reentrant.
  std::mutex backend_mu;

  explicit Impl(EmbeddingBackend& b) : backend(b) {
    const auto reply = [](httplib::Response& res, int status, const nlohmann::json& doc) {
      res.status = status;
      res.set_content(doc.dump(), "application/json");
    };

    server.Get("/v1/info", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"name", backend.name()}, {"dimension", backend.dimension()}});
    });

    server.Post("/v1/embed/text", [this, reply](const httplib::Request& req, httplib::Response& res) {
      std::vector<std::string> texts;
      try {
        texts = nlohmann::json::parse(req.body).at("texts").get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        return reply(res, 400, {{"error", e.what()}});
      }
      try {
        std::lock_guard lock(backend_mu);
        reply(res, 200, {{"vectors", backend.embed_texts(texts)}});
      } catch (const Error& e) {
        reply(res, 503, {{"error", e.what()}});
      }
    });

    server.Post("/v1/embed/region", [this, reply](const httplib::Request& req, httplib::Response& res) {
      ImageRef image;
      std::vector<RegionSpec> regions;
      try {
        const auto doc = nlohmann::json::parse(req.body);
        image = image_from_json(doc.at("image"));
        for (const auto& r : doc.at("requests")) {
          RegionSpec spec;
          for (const auto& b : r.at("boxes")) {
            spec.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(),
                                  b.at(2).get<double>(), b.at(3).get<double>()});
          }
          spec.render = parse_render_mode(r.at("render").get<std::string>());
          validate_region(image, spec.boxes);
          regions.push_back(std::move(spec));
        }
      } catch (const nlohmann::json::exception& e) {
        return reply(res, 400, {{"error", e.what()}});
      } catch (const Error& e) {
        return reply(res, 400, {{"error", e.what()}});
      }
      try {
        std::lock_guard lock(backend_mu);
        reply(res, 200, {{"vectors", backend.embed_regions(image, regions)}});
      } catch (const Error& e) {
        reply(res, e.code() == ErrorCode::kInvalidRegion ? 400 : 503, {{"error", e.what()}});
      }
    });
  }
};

EmbeddingServer::EmbeddingServer(EmbeddingBackend& backend)
    : impl_(std::make_unique<Impl>(backend)) {}

EmbeddingServer::~EmbeddingServer() { stop(); }

int EmbeddingServer::bind_any_port(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool EmbeddingServer::bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port);
}

bool EmbeddingServer::listen() { return impl_->server.listen_after_bind(); }

void EmbeddingServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void EmbeddingServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace structground
