// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/media.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <tuple>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

// ---------------------------------------------------------------------------
// Frame sampling
// ---------------------------------------------------------------------------

int sparse_frame_count(double duration_s, double rate_fps) {
  if (!(rate_fps > 0.0)) throw PreconditionError("frame rate must be positive");
  if (!(duration_s > 0.0)) throw PreconditionError("duration must be positive");
  // The epsilon keeps 3.0 * 1.0 from flooring to 2 after rounding noise.
  const auto n = static_cast<int>(std::floor(duration_s * rate_fps + 1e-9));
  return std::max(1, n);
}

std::vector<Frame> sample_frames(const MediaClip& clip, MediaSource& source, double rate_fps) {
  const int n = sparse_frame_count(clip.duration_s, rate_fps);
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = k / rate_fps;
    frames.push_back(Frame{clip.clip_id, k, t, source.frame_at(t)});
  }
  return frames;
}

std::vector<Frame> sample_frames(const MediaClip& clip, double rate_fps) {
  auto source = open_media(clip);
  return sample_frames(clip, *source, rate_fps);
}

std::vector<Frame> sample_uniform_frames(const MediaClip& clip, MediaSource& source, int count) {
  if (count <= 0) throw PreconditionError("frame count must be positive");
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double t = (k + 0.5) * clip.duration_s / count;
    frames.push_back(Frame{clip.clip_id, k, t, source.frame_at(t)});
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Boxes and tracking
// ---------------------------------------------------------------------------

double iou(const Box& a, const Box& b) {
  const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  const double i = inter.area();
  const double u = a.area() + b.area() - i;
  return u > 0.0 ? i / u : 0.0;
}

Box lerp(const Box& a, const Box& b, double t) {
  return Box{a.x0 + (b.x0 - a.x0) * t, a.y0 + (b.y0 - a.y0) * t, a.x1 + (b.x1 - a.x1) * t,
             a.y1 + (b.y1 - a.y1) * t};
}

Box expand_and_clamp(const Box& box, double margin) {
  const double w = box.x1 - box.x0;
  const double h = box.y1 - box.y0;
  return Box{std::clamp(box.x0 - margin * w, 0.0, 1.0), std::clamp(box.y0 - margin * h, 0.0, 1.0),
             std::clamp(box.x1 + margin * w, 0.0, 1.0), std::clamp(box.y1 + margin * h, 0.0, 1.0)};
}

std::string_view to_string(Gender g) { return g == Gender::MALE ? "MALE" : "FEMALE"; }

Gender parse_gender(std::string_view name) {
  const auto n = to_lower(name);
  if (n == "male" || n == "m") return Gender::MALE;
  if (n == "female" || n == "f") return Gender::FEMALE;
  throw FormatError("unknown gender '" + std::string(name) + "'");
}

void FaceTracklet::validate() const {
  if (last_index < first_index) throw ValidationError("frame_span", "last index precedes first index");
  if (static_cast<int>(boxes.size()) != length())
    throw ValidationError("boxes", "length does not match the frame span");
  if (det_confidence.size() != boxes.size())
    throw ValidationError("det_confidence", "length does not match the frame span");
  for (const auto& b : boxes) {
    if (!b.valid()) throw ValidationError("boxes", "box with x0 >= x1 or y0 >= y1");
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > 1 || b.y1 > 1) throw ValidationError("boxes", "box outside [0,1]");
  }
  for (double c : det_confidence)
    if (c < 0.0 || c > 1.0) throw ValidationError("det_confidence", "outside [0,1]");
  if (age_years && *age_years < 0.0) throw ValidationError("age_years", "negative age");
  if (gender_confidence && (*gender_confidence < 0.0 || *gender_confidence > 1.0))
    throw ValidationError("gender_confidence", "outside [0,1]");
}

namespace {

struct OpenTrack {
  std::vector<int> indices;
  std::vector<Box> boxes;
  std::vector<double> conf;
  int misses = 0;
};

FaceTracklet close_track(const std::string& clip_id, const OpenTrack& t, double rate) {
  FaceTracklet out;
  out.clip_id = clip_id;
  out.first_index = t.indices.front();
  out.last_index = t.indices.back();
  out.frame_rate_fps = rate;
  for (std::size_t k = 0; k < t.indices.size(); ++k) {
    if (k > 0) {
      // Fill missed frames so every index in the span has a box.
      const int gap = t.indices[k] - t.indices[k - 1];
      for (int g = 1; g < gap; ++g) {
        out.boxes.push_back(lerp(t.boxes[k - 1], t.boxes[k], static_cast<double>(g) / gap));
        out.det_confidence.push_back(0.0);
      }
    }
    out.boxes.push_back(t.boxes[k]);
    out.det_confidence.push_back(t.conf[k]);
  }
  return out;
}

}  // namespace

std::vector<FaceTracklet> link_detections(const std::string& clip_id,
                                          const std::vector<std::vector<Detection>>& per_frame,
                                          const TrackerOptions& options) {
  if (options.iou_threshold < 0.0 || options.iou_threshold > 1.0)
    throw PreconditionError("iou_threshold must be in [0,1]");
  std::vector<OpenTrack> active;
  std::vector<OpenTrack> finished;

  for (int f = 0; f < static_cast<int>(per_frame.size()); ++f) {
    const auto& dets = per_frame[static_cast<std::size_t>(f)];
    struct Pair {
      double score;
      std::size_t track;
      std::size_t det;
    };
    std::vector<Pair> pairs;
    for (std::size_t t = 0; t < active.size(); ++t)
      for (std::size_t d = 0; d < dets.size(); ++d) {
        const double s = iou(active[t].boxes.back(), dets[d].box);
        if (s >= options.iou_threshold && s > 0.0) pairs.push_back({s, t, d});
      }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.score > b.score; });
    std::vector<bool> track_used(active.size(), false);
    std::vector<bool> det_used(dets.size(), false);
    for (const auto& p : pairs) {
      if (track_used[p.track] || det_used[p.det]) continue;
      track_used[p.track] = det_used[p.det] = true;
      auto& tr = active[p.track];
      tr.indices.push_back(f);
      tr.boxes.push_back(dets[p.det].box);
      tr.conf.push_back(dets[p.det].confidence);
      tr.misses = 0;
    }
    std::vector<OpenTrack> still_active;
    for (std::size_t t = 0; t < active.size(); ++t) {
      if (!track_used[t] && ++active[t].misses >= options.gap_frames) {
        finished.push_back(std::move(active[t]));
      } else {
        still_active.push_back(std::move(active[t]));
      }
    }
    active = std::move(still_active);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (det_used[d]) continue;
      OpenTrack tr;
      tr.indices.push_back(f);
      tr.boxes.push_back(dets[d].box);
      tr.conf.push_back(dets[d].confidence);
      active.push_back(std::move(tr));
    }
  }
  for (auto& t : active) finished.push_back(std::move(t));

  std::stable_sort(finished.begin(), finished.end(),
                   [](const OpenTrack& a, const OpenTrack& b) { return a.indices.front() < b.indices.front(); });
  std::vector<FaceTracklet> out;
  for (const auto& t : finished) {
    const int span = t.indices.back() - t.indices.front() + 1;
    if (span < options.min_len) continue;
    auto tracklet = close_track(clip_id, t, options.rate_fps);
    tracklet.tracklet_id = clip_id + "#t" + std::to_string(out.size());
    out.push_back(std::move(tracklet));
  }
  return out;
}

std::vector<FaceTracklet> extract_tracklets(const MediaClip& clip, FaceDetector& detector,
                                            MediaSource& source, const TrackerOptions& options) {
  const auto frames = sample_frames(clip, source, options.rate_fps);
  std::vector<std::vector<Detection>> per_frame;
  per_frame.reserve(frames.size());
  for (const auto& frame : frames) {
    std::vector<Detection> dets;
    try {
      for (auto d : detector.detect(frame)) {
        d.box = Box{std::clamp(d.box.x0, 0.0, 1.0), std::clamp(d.box.y0, 0.0, 1.0),
                    std::clamp(d.box.x1, 0.0, 1.0), std::clamp(d.box.y1, 0.0, 1.0)};
        d.confidence = std::clamp(d.confidence, 0.0, 1.0);
        if (d.box.valid()) dets.push_back(d);
      }
    } catch (const Error& e) {
      log_warning("clip " + clip.clip_id + " frame " + std::to_string(frame.index) +
                  ": detector failed, frame skipped: " + e.what());
      dets.clear();
    }
    per_frame.push_back(std::move(dets));
  }
  return link_detections(clip.clip_id, per_frame, options);
}

std::vector<FaceTracklet> extract_tracklets(const MediaClip& clip, FaceDetector& detector,
                                            double iou_threshold) {
  auto source = open_media(clip);
  TrackerOptions options;
  options.iou_threshold = iou_threshold;
  return extract_tracklets(clip, detector, *source, options);
}

Box tracklet_box_at(const FaceTracklet& tracklet, double t) {
  const double u = std::clamp(t * tracklet.frame_rate_fps, static_cast<double>(tracklet.first_index),
                              static_cast<double>(tracklet.last_index));
  const int i = static_cast<int>(std::floor(u));
  if (i >= tracklet.last_index) return tracklet.boxes.back();
  const auto k = static_cast<std::size_t>(i - tracklet.first_index);
  return lerp(tracklet.boxes[k], tracklet.boxes[k + 1], u - i);
}

Image crop_image(const Image& image, const Box& box) {
  if (image.empty()) throw PreconditionError("cannot crop an empty image");
  int px0 = std::clamp(static_cast<int>(std::floor(box.x0 * image.width)), 0, image.width - 1);
  int py0 = std::clamp(static_cast<int>(std::floor(box.y0 * image.height)), 0, image.height - 1);
  int px1 = std::clamp(static_cast<int>(std::ceil(box.x1 * image.width)), px0 + 1, image.width);
  int py1 = std::clamp(static_cast<int>(std::ceil(box.y1 * image.height)), py0 + 1, image.height);
  Image out(px1 - px0, py1 - py0);
  for (int y = py0; y < py1; ++y)
    for (int x = px0; x < px1; ++x)
      for (int c = 0; c < 3; ++c) out.at(x - px0, y - py0, c) = image.at(x, y, c);
  return out;
}

std::vector<FaceCrop> crop_tracklet_frames(const MediaClip& clip, const FaceTracklet& tracklet,
                                           MediaSource& source, double dense_rate_fps, double margin) {
  if (tracklet.clip_id != clip.clip_id)
    throw PreconditionError("tracklet " + tracklet.tracklet_id + " does not belong to clip " + clip.clip_id);
  if (!(dense_rate_fps > 0.0)) throw PreconditionError("dense sampling rate must be positive");
  const double t0 = tracklet.first_index / tracklet.frame_rate_fps;
  const double t_last = tracklet.last_index / tracklet.frame_rate_fps;
  if (tracklet.first_index < 0 || t0 >= clip.duration_s || t_last >= clip.duration_s + 1e-9)
    throw RangeError("tracklet " + tracklet.tracklet_id + " spans outside the video");
  const double t1 = std::min((tracklet.last_index + 1) / tracklet.frame_rate_fps, clip.duration_s);
  const int n = sparse_frame_count(t1 - t0, dense_rate_fps);

  std::vector<FaceCrop> crops;
  crops.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = t0 + k / dense_rate_fps;
    const Box box = expand_and_clamp(tracklet_box_at(tracklet, t), margin);
    crops.push_back(FaceCrop{clip.clip_id, tracklet.tracklet_id, t, box, crop_image(source.frame_at(t), box)});
  }
  return crops;
}

std::vector<FaceCrop> crop_tracklet_frames(const MediaClip& clip, const FaceTracklet& tracklet,
                                           double dense_rate_fps) {
  auto source = open_media(clip);
  return crop_tracklet_frames(clip, tracklet, *source, dense_rate_fps);
}

// ---------------------------------------------------------------------------
// Audio
// ---------------------------------------------------------------------------

Waveform resample_audio(const Waveform& wave, double target_rate) {
  if (!(wave.sample_rate > 0.0)) throw PreconditionError("source sample rate must be positive");
  if (!(target_rate > 0.0)) throw PreconditionError("target sample rate must be positive");
  Waveform out;
  out.sample_rate = target_rate;
  if (wave.samples.empty()) return out;
  if (wave.sample_rate == target_rate) {
    out.samples = wave.samples;
    return out;
  }

  const double ratio = target_rate / wave.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
  constexpr double kZeroCrossings = 32.0;
  constexpr double kBeta = 8.6;
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
  const auto n_in = static_cast<long>(wave.samples.size());
  const auto n_out = static_cast<std::size_t>(std::llround(n_in * ratio));

  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double center = static_cast<double>(n) / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(center - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(center + half_width)));
    double acc = 0.0;
    double wsum = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double x = center - static_cast<double>(j);
      const double r = x / half_width;
      const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double arg = M_PI * cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double w = cutoff * sinc * window;
      acc += w * wave.samples[static_cast<std::size_t>(j)];
      wsum += w;
    }
    // Normalising by the tap sum keeps DC exact, including near the edges.
    out.samples[n] = static_cast<float>(wsum != 0.0 ? acc / wsum : 0.0);
  }
  return out;
}

int mel_frame_count(std::size_t num_samples, const MelConfig& c) {
  const auto n = std::max<std::size_t>(num_samples, static_cast<std::size_t>(c.window_samples));
  return static_cast<int>((n - static_cast<std::size_t>(c.window_samples)) / static_cast<std::size_t>(c.hop_samples)) + 1;
}

namespace {

double hz_to_mel_slaney(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz >= min_log_hz ? min_log_mel + std::log(hz / min_log_hz) / logstep : hz / f_sp;
}

double mel_to_hz_slaney(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel >= min_log_mel ? min_log_hz * std::exp(logstep * (mel - min_log_mel)) : f_sp * mel;
}

struct FftwPlanCache {
  std::mutex mutex;
  std::map<int, fftw_plan> plans;

  fftw_plan get(int n) {
    std::lock_guard lock(mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    double* in = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.emplace(n, plan);
    return plan;
  }
};

FftwPlanCache& plan_cache() {
  static FftwPlanCache cache;
  return cache;
}

}  // namespace

std::vector<double> periodic_hann(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / length);
  return w;
}

Matrix slaney_mel_filterbank(const MelConfig& c) {
  const int bins = c.window_samples / 2 + 1;
  Matrix fb = Matrix::Zero(c.n_mels, bins);
  const double mel_lo = hz_to_mel_slaney(c.fmin);
  const double mel_hi = hz_to_mel_slaney(c.fmax);
  std::vector<double> hz(static_cast<std::size_t>(c.n_mels + 2));
  for (int i = 0; i < c.n_mels + 2; ++i)
    hz[static_cast<std::size_t>(i)] = mel_to_hz_slaney(mel_lo + (mel_hi - mel_lo) * i / (c.n_mels + 1));
  for (int m = 0; m < c.n_mels; ++m) {
    const double lo = hz[static_cast<std::size_t>(m)];
    const double mid = hz[static_cast<std::size_t>(m + 1)];
    const double hi = hz[static_cast<std::size_t>(m + 2)];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * c.sample_rate / c.window_samples;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb(m, k) = enorm * std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

MelSpectrogram compute_log_mel(const Waveform& wave, const MelConfig& c) {
  if (wave.sample_rate != c.sample_rate)
    throw PreconditionError("log-mel expects " + std::to_string(c.sample_rate) + " Hz audio, got " +
                            std::to_string(wave.sample_rate));
  std::vector<double> x(wave.samples.begin(), wave.samples.end());
  if (x.size() < static_cast<std::size_t>(c.window_samples)) x.resize(static_cast<std::size_t>(c.window_samples), 0.0);
  const int frames = mel_frame_count(x.size(), c);
  const int bins = c.window_samples / 2 + 1;

  using Key = std::tuple<int, int, int, double, double>;
  static thread_local std::map<Key, std::pair<Matrix, std::vector<double>>> tables;
  auto& table = tables[Key{c.n_mels, c.window_samples, c.sample_rate, c.fmin, c.fmax}];
  if (table.first.size() == 0) table = {slaney_mel_filterbank(c), periodic_hann(c.window_samples)};
  const Matrix& fb = table.first;
  const auto& window = table.second;

  fftw_plan plan = plan_cache().get(c.window_samples);
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(static_cast<std::size_t>(c.window_samples)), fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(static_cast<std::size_t>(bins)), fftw_free);

  Matrix power(bins, frames);
  for (int f = 0; f < frames; ++f) {
    const std::size_t base = static_cast<std::size_t>(f) * static_cast<std::size_t>(c.hop_samples);
    for (int i = 0; i < c.window_samples; ++i)
      in.get()[i] = x[base + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (int k = 0; k < bins; ++k) power(k, f) = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
  }

  MelSpectrogram mel;
  mel.sample_rate = c.sample_rate;
  mel.window_ms = 1000.0 * c.window_samples / c.sample_rate;
  mel.hop_ms = 1000.0 * c.hop_samples / c.sample_rate;
  mel.values = (fb * power).unaryExpr([&](double e) { return std::log(std::max(e, c.log_floor)); });
  return mel;
}

}  // namespace omni
