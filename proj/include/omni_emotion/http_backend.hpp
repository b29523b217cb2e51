// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "omni_emotion/backends.hpp"

namespace omni {

struct HttpOptions {
  int pool_size = 4;
  double backoff_base_s = 1.0;
  double backoff_factor = 2.0;
  /// Called between retries; defaults to a real sleep. Tests inject a
  /// recorder.
  std::function<void(double seconds)> sleep;
};

/// Builds the HTTP adapter matching the descriptor's capability. The wire
/// format is POST {capability, prompt, payload_b64} answered by a JSON object
/// carrying "text", "fields" (or top-level fields) and/or "score".
std::unique_ptr<Backend> make_http_backend(BackendDescriptor descriptor, HttpOptions options = {});

struct ParsedEndpoint {
  std::string scheme;
  std::string host;
  int port = 80;
  std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& url);

}  // namespace omni
