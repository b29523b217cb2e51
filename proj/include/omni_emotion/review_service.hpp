// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "omni_emotion/corpus.hpp"
#include "omni_emotion/curation.hpp"

namespace omni {

/// Review queue over a manifest of SELF_REVIEWED records. Thread-safe.
class ReviewStore {
 public:
  using Clock = std::function<std::int64_t()>;  // epoch seconds

  struct Options {
    std::int64_t lease_seconds = 600;
    Clock clock;  // defaults to the system clock
  };

  /// Loads the manifest at path; clips supplies media for the records.
  ReviewStore(std::filesystem::path manifest_path, std::map<std::string, MediaClip> clips, Options options);
  ReviewStore(std::filesystem::path manifest_path, std::map<std::string, MediaClip> clips);
  ~ReviewStore();

  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  /// Next SELF_REVIEWED record not leased to someone else, leased to
  /// reviewer; a reviewer holding a live lease gets the same record again.
  std::optional<ReasoningAnnotation> next(const std::string& reviewer);
  std::optional<ReasoningAnnotation> get(const std::string& clip_id) const;
  std::optional<MediaClip> media(const std::string& clip_id) const;

  /// Applies a verdict. Throws VersionConflict when expected_version is stale
  /// and StateError/ValidationError from record_review.
  ReasoningAnnotation review(const std::string& clip_id, const ReviewVerdict& verdict, const std::string& reviewer,
                             std::int64_t expected_version);

  /// Reviewed records minus HUMAN_REJECTED ones.
  DatasetManifest export_manifest(const std::string& name) const;

  std::size_t pending() const;
  bool dirty() const;
  /// Writes the manifest back if anything changed since the last flush.
  void flush();

 private:
  struct Lease {
    std::string reviewer;
    std::int64_t expires_at = 0;
  };
  std::int64_t now() const;

  std::filesystem::path path_;
  std::map<std::string, MediaClip> clips_;
  Options options_;
  mutable std::mutex mutex_;
  DatasetManifest manifest_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Lease> leases_;
  bool dirty_ = false;
};

struct ReviewServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0: any free port
  std::optional<std::string> token;  // static bearer token; unset disables auth
};

/// HTTP front of a ReviewStore:
///   GET  /api/queue/next?reviewer=ID       200 {record, record_version, media} | 204
///   GET  /api/record/{clip_id}             200 | 404
///   POST /api/record/{clip_id}/review      200 | 400 | 404 | 409 | 422
///   GET  /api/media/{clip_id}?kind=frame&t=S | kind=audio
///   GET  /api/export                       JSONL of reviewed, non-rejected records
class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, ReviewServerOptions options);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds and starts serving on a background thread. Returns the bound port;
  /// a port already in use raises IoError.
  int start();
  /// Stops serving and flushes the store.
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ReviewStore& store_;
  ReviewServerOptions options_;
  std::jthread thread_;
  int port_ = 0;
};

/// Parses a review POST body: {verdict, edits?, reviewer_id, record_version}.
struct ReviewRequest {
  ReviewVerdict verdict;
  std::string reviewer_id;
  std::int64_t record_version = 0;
};
ReviewRequest parse_review_request(const json& body);

}  // namespace omni
