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

#include <semaphore>

#include <httplib.h>

#include "http_util.hpp"
#include "structground/caption_parsing.hpp"

namespace structground {

struct HttpLlmClient::Impl {
  LlmClientOptions options;
  detail::SplitUrl url;
  std::counting_semaphore<> in_flight;

  explicit Impl(LlmClientOptions opts)
      : options(std::move(opts)),
        url(detail::split_url(options.url)),
        in_flight(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))) {}
};

HttpLlmClient::HttpLlmClient(LlmClientOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpLlmClient::~HttpLlmClient() = default;

std::string HttpLlmClient::complete(std::string_view /*caption*/, std::string_view prompt) {
  const nlohmann::json body{{"model", impl_->options.model},
                            {"prompt", std::string(prompt)},
                            {"max_tokens", impl_->options.max_tokens},
                            {"temperature", 0}};
  impl_->in_flight.acquire();
  detail::SemaphoreRelease release{impl_->in_flight};

  httplib::Client client(impl_->url.base);
  detail::apply_timeout(client, impl_->options.timeout);
  auto res = client.Post(impl_->url.path, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kLlmUnavailable,
                "LLM endpoint " + impl_->options.url + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kLlmUnavailable,
                "LLM endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body).at("completion").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kLlmUnavailable, std::string("malformed LLM response: ") + e.what());
  }
}

}  // namespace structground
