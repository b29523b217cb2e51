// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "omni_emotion/corpus.hpp"
#include "omni_emotion/linalg.hpp"

namespace omni {

/// Interleaved RGB image, row-major, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  bool empty() const noexcept { return width <= 0 || height <= 0; }
  float& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint64_t checksum() const;
  bool operator==(const Image&) const = default;
};

/// Area-averaged resize; used by the encoder stubs to bring inputs to a fixed
/// grid.
Image resize_area(const Image& src, int width, int height);

struct Frame {
  std::string clip_id;
  int index = 0;
  double timestamp_s = 0.0;
  Image image;
};

struct Waveform {
  std::vector<float> samples;
  double sample_rate = 16000.0;

  double duration_s() const { return sample_rate > 0 ? samples.size() / sample_rate : 0.0; }
  std::uint64_t checksum() const;
};

inline constexpr double kTargetSampleRate = 16000.0;

// ---------------------------------------------------------------------------
// Decode seam
// ---------------------------------------------------------------------------

/// Everything downstream of decoding sees media only through this interface.
class MediaSource {
 public:
  virtual ~MediaSource() = default;
  /// Frame nearest to time t (seconds). Throws DecodeError if the source has
  /// no video.
  virtual Image frame_at(double t) = 0;
  /// Full audio track, or nullopt when the clip has none.
  virtual std::optional<Waveform> audio() = 0;
};

using DecoderFactory = std::function<std::unique_ptr<MediaSource>(const MediaClip&)>;

/// Maps a URI scheme ("synthetic", "frames", "wav", or any test scheme) to a
/// decoder. Built-in schemes are registered on first use.
class DecoderRegistry {
 public:
  static DecoderRegistry& instance();
  void register_scheme(const std::string& scheme, DecoderFactory factory);
  void unregister_scheme(const std::string& scheme);
  std::unique_ptr<MediaSource> open(const MediaClip& clip) const;

 private:
  DecoderRegistry();
  mutable std::mutex mutex_;
  std::map<std::string, DecoderFactory> factories_;
};

/// The single decode entry point.
std::unique_ptr<MediaSource> open_media(const MediaClip& clip);

/// Scheme of a media URI: "synthetic://x" -> "synthetic", "a/b.wav" -> "wav",
/// a directory -> "frames".
std::string media_scheme(const std::string& uri);

Waveform read_wav(const std::filesystem::path& path);
std::string encode_wav_pcm16(const Waveform& wave);
Waveform decode_wav(const std::string& bytes);
std::string encode_ppm(const Image& image);
Image decode_ppm(const std::string& bytes);

// ---------------------------------------------------------------------------
// Frames and tracklets
// ---------------------------------------------------------------------------

/// Number of sparse frames for a clip: max(1, floor(duration_s * rate_fps)).
int sparse_frame_count(double duration_s, double rate_fps);

std::vector<Frame> sample_frames(const MediaClip& clip, MediaSource& source, double rate_fps = 1.0);
std::vector<Frame> sample_frames(const MediaClip& clip, double rate_fps = 1.0);

/// Exactly `count` frames at the centres of `count` equal segments of the clip.
std::vector<Frame> sample_uniform_frames(const MediaClip& clip, MediaSource& source, int count);

struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double area() const { return (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0; }
  bool valid() const { return x0 < x1 && y0 < y1; }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);
Box lerp(const Box& a, const Box& b, double t);
/// Grows the box by `margin` of its width/height on every side, then clamps to
/// the unit square.
Box expand_and_clamp(const Box& box, double margin);

struct Detection {
  Box box;
  double confidence = 1.0;
};

/// Face detector seam; implementations live in the backends module.
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual const std::string& backend_id() const = 0;
  virtual std::vector<Detection> detect(const Frame& frame) = 0;
};

enum class Gender { MALE, FEMALE };
std::string_view to_string(Gender g);
Gender parse_gender(std::string_view name);

struct FaceTracklet {
  std::string tracklet_id;
  std::string clip_id;
  int first_index = 0;  // sparse-frame indices, inclusive
  int last_index = 0;
  std::vector<Box> boxes;  // one per frame in [first_index, last_index]
  std::vector<double> det_confidence;
  double frame_rate_fps = 1.0;  // rate the indices refer to
  std::optional<double> age_years;
  std::optional<Gender> gender;
  std::optional<double> gender_confidence;

  int length() const { return last_index - first_index + 1; }
  void validate() const;
};

struct TrackerOptions {
  double iou_threshold = 0.5;
  int gap_frames = 10;
  int min_len = 5;
  double rate_fps = 1.0;
};

/// Greedy IoU association over sparse frames. Detector failures on a frame
/// are logged and treated as a frame without detections.
std::vector<FaceTracklet> extract_tracklets(const MediaClip& clip, FaceDetector& detector,
                                            MediaSource& source, const TrackerOptions& options = {});
std::vector<FaceTracklet> extract_tracklets(const MediaClip& clip, FaceDetector& detector,
                                            double iou_threshold = 0.5);
/// Tracker core over precomputed per-frame detections (frame index == vector
/// index).
std::vector<FaceTracklet> link_detections(const std::string& clip_id,
                                          const std::vector<std::vector<Detection>>& per_frame,
                                          const TrackerOptions& options);

/// Box at time t, linearly interpolated between annotated frames and held
/// constant beyond the ends.
Box tracklet_box_at(const FaceTracklet& tracklet, double t);

struct FaceCrop {
  std::string clip_id;
  std::string tracklet_id;
  double timestamp_s = 0.0;
  Box box;  // after margin and clamping
  Image image;
};

inline constexpr double kDefaultDenseRateFps = 4.0;
inline constexpr double kDefaultCropMargin = 0.2;

std::vector<FaceCrop> crop_tracklet_frames(const MediaClip& clip, const FaceTracklet& tracklet,
                                           MediaSource& source, double dense_rate_fps = kDefaultDenseRateFps,
                                           double margin = kDefaultCropMargin);
std::vector<FaceCrop> crop_tracklet_frames(const MediaClip& clip, const FaceTracklet& tracklet,
                                           double dense_rate_fps = kDefaultDenseRateFps);
Image crop_image(const Image& image, const Box& box);

// ---------------------------------------------------------------------------
// Audio
// ---------------------------------------------------------------------------

/// Band-limited (Kaiser-windowed sinc) resampling to `target_rate`.
Waveform resample_audio(const Waveform& wave, double target_rate = kTargetSampleRate);

struct MelConfig {
  int sample_rate = 16000;
  int window_samples = 400;  // 25 ms
  int hop_samples = 160;     // 10 ms
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
};

/// Log-mel energies, [n_mels x frames].
struct MelSpectrogram {
  Matrix values;
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;

  int channels() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

/// floor((num_samples - window) / hop) + 1, with inputs shorter than one
/// window counted as exactly one window.
int mel_frame_count(std::size_t num_samples, const MelConfig& config = {});

/// Slaney-scale triangular filters with Slaney area normalisation,
/// [n_mels x (window/2 + 1)].
Matrix slaney_mel_filterbank(const MelConfig& config = {});
std::vector<double> periodic_hann(int length);

MelSpectrogram compute_log_mel(const Waveform& wave, const MelConfig& config = {});

}  // namespace omni
