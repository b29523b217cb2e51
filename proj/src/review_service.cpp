// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/review_service.hpp"

#include <httplib.h>

#include <chrono>
#include <sstream>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/media.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

ReviewStore::ReviewStore(std::filesystem::path manifest_path, std::map<std::string, MediaClip> clips)
    : ReviewStore(std::move(manifest_path), std::move(clips), Options{}) {}

ReviewStore::ReviewStore(std::filesystem::path manifest_path, std::map<std::string, MediaClip> clips,
                         Options options)
    : path_(std::move(manifest_path)), clips_(std::move(clips)), options_(std::move(options)) {
  if (!std::filesystem::exists(path_)) throw PreconditionError("review store " + path_.string() + " does not exist");
  manifest_ = read_manifest(path_);
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) index_[manifest_.records[i].clip_id] = i;
}

ReviewStore::~ReviewStore() {
  try {
    flush();
  } catch (const std::exception& e) {
    log_error(std::string("review store flush failed: ") + e.what());
  }
}

std::int64_t ReviewStore::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::optional<ReasoningAnnotation> ReviewStore::next(const std::string& reviewer) {
  if (trim(reviewer).empty()) throw ValidationError("reviewer", "must be non-empty");
  std::lock_guard lock(mutex_);
  const std::int64_t t = now();
  for (const auto& [clip_id, lease] : leases_) {
    const auto& rec = manifest_.records[index_.at(clip_id)];
    if (lease.reviewer == reviewer && lease.expires_at > t && rec.review_status == ReviewStatus::SELF_REVIEWED) {
      return rec;
    }
  }
  for (const auto& [clip_id, i] : index_) {
    const auto& rec = manifest_.records[i];
    if (rec.review_status != ReviewStatus::SELF_REVIEWED) continue;
    const auto it = leases_.find(clip_id);
    if (it != leases_.end() && it->second.expires_at > t && it->second.reviewer != reviewer) continue;
    leases_[clip_id] = Lease{reviewer, t + options_.lease_seconds};
    return rec;
  }
  return std::nullopt;
}

std::optional<ReasoningAnnotation> ReviewStore::get(const std::string& clip_id) const {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(clip_id);
  if (it == index_.end()) return std::nullopt;
  return manifest_.records[it->second];
}

std::optional<MediaClip> ReviewStore::media(const std::string& clip_id) const {
  const auto it = clips_.find(clip_id);
  if (it == clips_.end()) return std::nullopt;
  return it->second;
}

ReasoningAnnotation ReviewStore::review(const std::string& clip_id, const ReviewVerdict& verdict,
                                        const std::string& reviewer, std::int64_t expected_version) {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(clip_id);
  if (it == index_.end()) throw PreconditionError("unknown clip '" + clip_id + "'");
  auto& rec = manifest_.records[it->second];
  if (rec.version() != expected_version) {
    throw VersionConflict("record '" + clip_id + "' is at version " + std::to_string(rec.version()) + ", not " +
                          std::to_string(expected_version));
  }
  rec = record_review(rec, verdict, reviewer, iso8601_utc(now()));
  leases_.erase(clip_id);
  dirty_ = true;
  return rec;
}

DatasetManifest ReviewStore::export_manifest(const std::string& name) const {
  std::lock_guard lock(mutex_);
  std::vector<ReasoningAnnotation> reviewed;
  for (const auto& r : manifest_.records) {
    if (r.review_status == ReviewStatus::HUMAN_APPROVED || r.review_status == ReviewStatus::HUMAN_EDITED) {
      reviewed.push_back(r);
    }
  }
  return export_reviewed(reviewed, name, manifest_.provenance);
}

std::size_t ReviewStore::pending() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& r : manifest_.records) n += r.review_status == ReviewStatus::SELF_REVIEWED;
  return n;
}

bool ReviewStore::dirty() const {
  std::lock_guard lock(mutex_);
  return dirty_;
}

void ReviewStore::flush() {
  std::lock_guard lock(mutex_);
  if (!dirty_) return;
  write_manifest(manifest_, path_);
  dirty_ = false;
}

// ---------------------------------------------------------------------------
// Request parsing
// ---------------------------------------------------------------------------

ReviewRequest parse_review_request(const json& body) {
  if (!body.is_object()) throw FormatError("review body must be a JSON object");
  ReviewRequest r;
  try {
    r.verdict.kind = parse_verdict_kind(body.at("verdict").get<std::string>());
    r.reviewer_id = body.at("reviewer_id").get<std::string>();
    r.record_version = body.at("record_version").get<std::int64_t>();
    if (body.contains("edits") && !body.at("edits").is_null()) {
      const auto& e = body.at("edits");
      if (!e.is_object()) throw FormatError("edits must be an object");
      if (e.contains("reason")) r.verdict.new_reason = e.at("reason").get<std::string>();
      if (e.contains("labels")) r.verdict.new_labels = normalize_labels(e.at("labels").get<std::vector<std::string>>());
      if (e.contains("intensity")) r.verdict.new_intensity = e.at("intensity").get<int>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad review body: ") + e.what());
  }
  if (r.verdict.kind != VerdictKind::EDIT &&
      (r.verdict.new_reason || r.verdict.new_labels || r.verdict.new_intensity)) {
    throw FormatError("edits are only allowed with the EDIT verdict");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

struct ReviewServer::Impl {
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

json record_payload(const ReasoningAnnotation& rec, const std::optional<MediaClip>& clip) {
  json media = json::object();
  if (clip) {
    media = json{{"uri", clip->media_uri},
                 {"frame_url", "/api/media/" + rec.clip_id + "?kind=frame"},
                 {"audio_url", "/api/media/" + rec.clip_id + "?kind=audio"},
                 {"duration_s", clip->duration_s}};
    if (clip->ground_truth_label) media["ground_truth_label"] = *clip->ground_truth_label;
    if (clip->subtitle) media["subtitle"] = *clip->subtitle;
  }
  return json{{"record", to_json(rec)}, {"record_version", rec.version()}, {"media", media}};
}

}  // namespace

ReviewServer::ReviewServer(ReviewStore& store, ReviewServerOptions options)
    : impl_(std::make_unique<Impl>()), store_(store), options_(std::move(options)) {
  auto& srv = impl_->server;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!options_.token) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + *options_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, 401, "missing or invalid reviewer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, json{{"status", "ok"}});
  });

  srv.Get("/api/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string reviewer = req.get_param_value("reviewer");
    if (trim(reviewer).empty()) return send_error(res, 400, "reviewer parameter is required");
    const auto rec = store_.next(reviewer);
    if (!rec) {
      res.status = 204;
      return;
    }
    send_json(res, 200, record_payload(*rec, store_.media(rec->clip_id)));
  });

  srv.Get(R"(/api/record/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto rec = store_.get(id);
    if (!rec) return send_error(res, 404, "unknown clip '" + id + "'");
    send_json(res, 200, record_payload(*rec, store_.media(id)));
  });

  srv.Post(R"(/api/record/([^/]+)/review)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!store_.get(id)) return send_error(res, 404, "unknown clip '" + id + "'");
    ReviewRequest r;
    try {
      r = parse_review_request(json::parse(req.body));
    } catch (const json::parse_error& e) {
      return send_error(res, 400, std::string("body is not JSON: ") + e.what());
    } catch (const Error& e) {
      return send_error(res, 400, e.what());
    }
    try {
      const auto rec = store_.review(id, r.verdict, r.reviewer_id, r.record_version);
      send_json(res, 200, record_payload(rec, store_.media(id)));
    } catch (const VersionConflict& e) {
      send_error(res, 409, e.what());
    } catch (const StateError& e) {
      send_error(res, 422, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 422, e.what());
    }
  });

  srv.Get(R"(/api/media/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto clip = store_.media(id);
    if (!clip) return send_error(res, 404, "no media for clip '" + id + "'");
    const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "frame";
    try {
      auto source = open_media(*clip);
      if (kind == "audio") {
        const auto wave = source->audio();
        if (!wave) return send_error(res, 404, "clip '" + id + "' has no audio");
        res.set_content(encode_wav_pcm16(*wave), "audio/wav");
      } else if (kind == "frame") {
        double t = clip->duration_s / 2.0;
        if (req.has_param("t")) t = std::stod(req.get_param_value("t"));
        res.set_content(encode_ppm(source->frame_at(t)), "image/x-portable-pixmap");
      } else {
        return send_error(res, 400, "kind must be frame or audio");
      }
      res.status = 200;
    } catch (const std::invalid_argument&) {
      send_error(res, 400, "t must be a number");
    } catch (const Error& e) {
      send_error(res, 404, e.what());
    }
  });

  srv.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(serialize_records(store_.export_manifest("HRE")), "application/x-ndjson");
  });
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start() {
  auto& srv = impl_->server;
  // The library default is SO_REUSEPORT, which lets a second service share the port.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  if (options_.port == 0) {
    port_ = srv.bind_to_any_port(options_.host);
  } else {
    port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) {
    throw IoError("cannot bind review service to " + options_.host + ":" + std::to_string(options_.port));
  }
  thread_ = std::jthread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  log_info("review service listening on " + options_.host + ":" + std::to_string(port_));
  return port_;
}

void ReviewServer::stop() {
  if (thread_.joinable()) {
    impl_->server.stop();
    thread_.join();
  }
  store_.flush();
}

}  // namespace omni
