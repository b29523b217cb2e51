// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

ParsedEndpoint parse_endpoint(const std::string& url) {
  ParsedEndpoint p;
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
  p.scheme = to_lower(url.substr(0, sep));
  if (p.scheme != "http") throw ConfigError("endpoint '" + url + "': only http:// is supported");
  std::string rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  p.path = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    try {
      p.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("endpoint '" + url + "' has a bad port");
    }
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw ConfigError("endpoint '" + url + "' has no host");
  p.host = authority;
  return p;
}

namespace {

/// Bounded pool of keep-alive clients; one request per client at a time.
class HttpTransport {
 public:
  HttpTransport(const BackendDescriptor& d, HttpOptions o)
      : descriptor_(d), options_(std::move(o)), endpoint_(parse_endpoint(*d.endpoint)), slots_(options_.pool_size) {
    if (options_.pool_size < 1 || options_.pool_size > kMaxPool) throw ConfigError("pool_size must be in [1, 64]");
    if (!options_.sleep) {
      options_.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    }
  }

  json post(Capability cap, const std::string& prompt, const std::string& payload) {
    json body = {{"capability", std::string(to_string(cap))},
                 {"prompt", prompt},
                 {"payload_b64", base64_encode(payload)}};
    const std::string text = body.dump();
    const int attempts = descriptor_.max_retries + 1;
    std::string last;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) options_.sleep(options_.backoff_base_s * std::pow(options_.backoff_factor, attempt - 1));
      try {
        return once(text);
      } catch (const BackendError& e) {
        if (!e.transient()) throw;
        last = e.what();
        log_warning(last);
      }
    }
    throw BackendError(descriptor_.backend_id, "gave up after " + std::to_string(attempts) + " attempt(s): " + last,
                       true);
  }

 private:
  static constexpr int kMaxPool = 64;

  json once(const std::string& body) {
    slots_.acquire();
    std::unique_ptr<httplib::Client> client = checkout();
    httplib::Result res;
    {
      res = client->Post(endpoint_.path, body, "application/json");
    }
    const bool ok = static_cast<bool>(res);
    checkin(std::move(client));
    slots_.release();

    const std::string& id = descriptor_.backend_id;
    if (!ok) throw BackendError(id, "transport error: " + httplib::to_string(res.error()), true);
    const int status = res->status;
    if (status == 408 || status == 429 || status >= 500) {
      throw BackendError(id, "HTTP " + std::to_string(status), true);
    }
    if (status < 200 || status >= 300) throw BackendError(id, "HTTP " + std::to_string(status), false);
    try {
      json j = json::parse(res->body);
      if (!j.is_object()) throw ProtocolError(id, "response is not a JSON object");
      return j;
    } catch (const json::exception& e) {
      throw ProtocolError(id, std::string("malformed JSON response: ") + e.what());
    }
  }

  std::unique_ptr<httplib::Client> checkout() {
    {
      std::lock_guard lock(mutex_);
      if (!idle_.empty()) {
        auto c = std::move(idle_.back());
        idle_.pop_back();
        return c;
      }
    }
    auto c = std::make_unique<httplib::Client>(endpoint_.host, endpoint_.port);
    const auto secs = static_cast<time_t>(descriptor_.timeout_s);
    const auto usecs = static_cast<time_t>((descriptor_.timeout_s - secs) * 1e6);
    c->set_connection_timeout(secs, usecs);
    c->set_read_timeout(secs, usecs);
    c->set_write_timeout(secs, usecs);
    c->set_keep_alive(true);
    if (descriptor_.api_key) c->set_bearer_token_auth(*descriptor_.api_key);
    return c;
  }

  void checkin(std::unique_ptr<httplib::Client> c) {
    std::lock_guard lock(mutex_);
    idle_.push_back(std::move(c));
  }

  BackendDescriptor descriptor_;
  HttpOptions options_;
  ParsedEndpoint endpoint_;
  std::counting_semaphore<kMaxPool> slots_;
  std::mutex mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
};

std::string text_of(const json& j, const std::string& id) {
  if (auto it = j.find("text"); it != j.end() && it->is_string()) return it->get<std::string>();
  throw ProtocolError(id, "response has no \"text\" string");
}

const json& fields_of(const json& j) {
  if (auto it = j.find("fields"); it != j.end() && it->is_object()) return *it;
  return j;
}

std::string ppm_bundle(std::span<const Frame> frames) {
  std::string out;
  for (const auto& f : frames) out += encode_ppm(f.image);
  return out;
}

std::string ppm_bundle(std::span<const FaceCrop> crops) {
  std::string out;
  for (const auto& c : crops) out += encode_ppm(c.image);
  return out;
}

class HttpVideoDescriber final : public VideoDescriber {
 public:
  HttpVideoDescriber(BackendDescriptor d, HttpOptions o) : VideoDescriber(d), http_(d, std::move(o)) {}

 protected:
  std::string do_describe_video(std::span<const Frame> frames, const std::string& prompt) override {
    return text_of(http_.post(Capability::VIDEO_DESCRIBE, prompt, ppm_bundle(frames)), id());
  }

 private:
  HttpTransport http_;
};

class HttpFaceDescriber final : public FaceDescriber {
 public:
  HttpFaceDescriber(BackendDescriptor d, HttpOptions o) : FaceDescriber(d), http_(d, std::move(o)) {}

 protected:
  std::string do_describe_face(std::span<const FaceCrop> crops, const std::string& prompt) override {
    return text_of(http_.post(Capability::FACE_DESCRIBE, prompt, ppm_bundle(crops)), id());
  }

 private:
  HttpTransport http_;
};

class HttpAgeGender final : public AgeGenderEstimator {
 public:
  HttpAgeGender(BackendDescriptor d, HttpOptions o) : AgeGenderEstimator(d), http_(d, std::move(o)) {}

 protected:
  AgeGenderEstimate do_estimate(const Image& crop) override {
    const json j = http_.post(Capability::AGE_GENDER, "", encode_ppm(crop));
    const json& f = fields_of(j);
    try {
      return {f.at("age_years").get<double>(), parse_gender(f.at("gender").get<std::string>()),
              f.at("confidence").get<double>()};
    } catch (const json::exception& e) {
      throw ProtocolError(id(), std::string("bad age/gender fields: ") + e.what());
    } catch (const ValidationError& e) {
      throw ProtocolError(id(), e.what());
    }
  }

 private:
  HttpTransport http_;
};

class HttpAudioAnalyzer final : public AudioAnalyzer {
 public:
  HttpAudioAnalyzer(BackendDescriptor d, HttpOptions o) : AudioAnalyzer(d), http_(d, std::move(o)) {}

 protected:
  AudioAnalysis do_analyze(const Waveform& wave) override {
    const json j = http_.post(Capability::AUDIO_ANALYZE, "", encode_wav_pcm16(wave));
    const json& f = fields_of(j);
    try {
      return {f.at("caption").get<std::string>(), f.at("transcript").get<std::string>(),
              f.at("audio_emotion").get<std::string>()};
    } catch (const json::exception& e) {
      throw ProtocolError(id(), std::string("bad audio fields: ") + e.what());
    }
  }

 private:
  HttpTransport http_;
};

class HttpJudge final : public Judge {
 public:
  HttpJudge(BackendDescriptor d, HttpOptions o) : Judge(d), http_(d, std::move(o)) {}

 protected:
  RawJudgeResponse do_judge(const std::string& prompt, const std::vector<std::string>& context) override {
    const json j = http_.post(Capability::JUDGE, prompt, json{{"context_documents", context}}.dump());
    RawJudgeResponse r;
    r.raw = j.dump();
    if (auto it = j.find("text"); it != j.end() && it->is_string()) r.text = it->get<std::string>();
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw ProtocolError(id(), "\"score\" must be an integer");
      r.score = it->get<long long>();
      if (r.text.empty()) r.text = std::to_string(*r.score);
    }
    if (r.text.empty()) throw ProtocolError(id(), "response has neither \"text\" nor \"score\"");
    return r;
  }

 private:
  HttpTransport http_;
};

class HttpFaceDetector final : public FaceDetectorBackend {
 public:
  HttpFaceDetector(BackendDescriptor d, HttpOptions o) : FaceDetectorBackend(d), http_(d, std::move(o)) {}

  std::vector<Detection> detect(const Frame& frame) override {
    const json j = http_.post(Capability::FACE_DETECT, "", encode_ppm(frame.image));
    const json& f = fields_of(j);
    std::vector<Detection> out;
    try {
      for (const auto& b : f.at("detections")) {
        Detection d;
        d.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        d.confidence = b.size() > 4 ? b.at(4).get<double>() : 1.0;
        if (d.confidence < 0.0 || d.confidence > 1.0) throw ProtocolError(id(), "detection confidence outside [0,1]");
        out.push_back(d);
      }
    } catch (const json::exception& e) {
      throw ProtocolError(id(), std::string("bad detections: ") + e.what());
    }
    return out;
  }

 private:
  HttpTransport http_;
};

}  // namespace

std::unique_ptr<Backend> make_http_backend(BackendDescriptor d, HttpOptions options) {
  d.validate();
  if (!d.endpoint) throw ConfigError("http backend '" + d.backend_id + "' has no endpoint");
  switch (d.capability) {
    case Capability::VIDEO_DESCRIBE: return std::make_unique<HttpVideoDescriber>(std::move(d), std::move(options));
    case Capability::FACE_DESCRIBE: return std::make_unique<HttpFaceDescriber>(std::move(d), std::move(options));
    case Capability::AGE_GENDER: return std::make_unique<HttpAgeGender>(std::move(d), std::move(options));
    case Capability::AUDIO_ANALYZE: return std::make_unique<HttpAudioAnalyzer>(std::move(d), std::move(options));
    case Capability::JUDGE: return std::make_unique<HttpJudge>(std::move(d), std::move(options));
    case Capability::FACE_DETECT: return std::make_unique<HttpFaceDetector>(std::move(d), std::move(options));
  }
  throw ConfigError("unsupported capability");
}

}  // namespace omni
