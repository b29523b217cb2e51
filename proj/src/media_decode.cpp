// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "omni_emotion/error.hpp"
#include "omni_emotion/media.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

std::uint64_t Image::checksum() const {
  std::uint64_t h = fnv1a64(std::span<const float>(rgb));
  h = fnv1a64(std::to_string(width) + "x" + std::to_string(height), h);
  return h;
}

std::uint64_t Waveform::checksum() const {
  return fnv1a64(std::to_string(sample_rate), fnv1a64(std::span<const float>(samples)));
}

Image resize_area(const Image& src, int width, int height) {
  if (src.empty()) throw PreconditionError("cannot resize an empty image");
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy0 = y * src.height / height;
    const int sy1 = std::max(sy0 + 1, (y + 1) * src.height / height);
    for (int x = 0; x < width; ++x) {
      const int sx0 = x * src.width / width;
      const int sx1 = std::max(sx0 + 1, (x + 1) * src.width / width);
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int sy = sy0; sy < sy1; ++sy)
          for (int sx = sx0; sx < sx1; ++sx) acc += src.at(sx, sy, c);
        out.at(x, y, c) = static_cast<float>(acc / ((sy1 - sy0) * (sx1 - sx0)));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// WAV / PPM codecs
// ---------------------------------------------------------------------------

namespace {

std::uint32_t le32(const std::string& b, std::size_t off) {
  return std::uint32_t(std::uint8_t(b[off])) | (std::uint32_t(std::uint8_t(b[off + 1])) << 8) |
         (std::uint32_t(std::uint8_t(b[off + 2])) << 16) | (std::uint32_t(std::uint8_t(b[off + 3])) << 24);
}
std::uint16_t le16(const std::string& b, std::size_t off) {
  return std::uint16_t(std::uint8_t(b[off]) | (std::uint8_t(b[off + 1]) << 8));
}
void put32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b += static_cast<char>((v >> (8 * i)) & 0xFF);
}
void put16(std::string& b, std::uint16_t v) {
  b += static_cast<char>(v & 0xFF);
  b += static_cast<char>((v >> 8) & 0xFF);
}

}  // namespace

Waveform decode_wav(const std::string& b) {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0)
    throw FormatError("not a RIFF/WAVE stream");
  std::size_t off = 12;
  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (off + 8 <= b.size()) {
    const std::string id = b.substr(off, 4);
    const std::uint32_t size = le32(b, off + 4);
    const std::size_t body = off + 8;
    if (body + size > b.size() && id != "data") throw FormatError("truncated WAV chunk '" + id + "'");
    if (id == "fmt ") {
      format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
    } else if (id == "data") {
      if (channels <= 0 || rate == 0) throw FormatError("WAV data before fmt chunk");
      const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
      Waveform w;
      w.sample_rate = rate;
      const int bytes = bits / 8;
      const std::size_t frames = avail / (static_cast<std::size_t>(bytes) * channels);
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          const std::size_t p = body + (i * channels + c) * bytes;
          if (format == 1 && bits == 16) {
            acc += static_cast<std::int16_t>(le16(b, p)) / 32768.0;
          } else if (format == 3 && bits == 32) {
            const std::uint32_t raw = le32(b, p);
            float f;
            std::memcpy(&f, &raw, sizeof f);
            acc += f;
          } else {
            throw FormatError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                              std::to_string(bits) + " bits)");
          }
        }
        w.samples[i] = static_cast<float>(acc / channels);
      }
      return w;
    }
    off = body + size + (size & 1);
  }
  throw FormatError("WAV stream has no data chunk");
}

Waveform read_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

std::string encode_wav_pcm16(const Waveform& w) {
  std::string b = "RIFF";
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  put32(b, 36 + data_bytes);
  b += "WAVEfmt ";
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, static_cast<std::uint32_t>(w.sample_rate));
  put32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(b, 2);
  put16(b, 16);
  b += "data";
  put32(b, data_bytes);
  for (float s : w.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  return b;
}

std::string encode_ppm(const Image& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.rgb.size());
  for (float v : image.rgb)
    out += static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return out;
}

Image decode_ppm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported PPM header");
  in.get();
  Image img(w, h);
  for (auto& v : img.rgb) {
    const int c = in.get();
    if (c == EOF) throw FormatError("truncated PPM data");
    v = static_cast<float>(static_cast<unsigned char>(c)) / 255.0f;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Built-in media sources
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_query(const std::string& uri) {
  std::map<std::string, std::string> out;
  const auto q = uri.find('?');
  if (q == std::string::npos) return out;
  for (const auto& kv : split(uri.substr(q + 1), '&')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      out[kv] = "1";
    } else {
      out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  }
  return out;
}

double param(const std::map<std::string, std::string>& q, const std::string& key, double fallback) {
  const auto it = q.find(key);
  if (it == q.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("synthetic media parameter '" + key + "' is not a number");
  }
}

/// Deterministic generator behind "synthetic://name?w=64&h=48&audio=1&tone=220&amp=0.3&rate=16000&silence=0".
class SyntheticSource final : public MediaSource {
 public:
  explicit SyntheticSource(const MediaClip& clip) : clip_(clip) {
    const auto q = parse_query(clip.media_uri);
    width_ = static_cast<int>(param(q, "w", 64));
    height_ = static_cast<int>(param(q, "h", 48));
    has_audio_ = param(q, "audio", 1) != 0;
    silence_ = param(q, "silence", 0) != 0;
    tone_ = param(q, "tone", 220);
    amp_ = param(q, "amp", 0.3);
    rate_ = param(q, "rate", kTargetSampleRate);
    seed_ = fnv1a64(clip.clip_id + "|" + clip.media_uri);
    if (width_ <= 0 || height_ <= 0 || rate_ <= 0)
      throw DecodeError(clip.clip_id, "synthetic media parameters out of range");
  }

  Image frame_at(double t) override {
    Image img(width_, height_);
    const double f1 = 1.0 + static_cast<double>(seed_ % 5);
    const double f2 = 1.0 + static_cast<double>((seed_ >> 8) % 3);
    const double phase = static_cast<double>((seed_ >> 16) % 1000) / 1000.0;
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = 0.5 + 0.4 * std::sin(2.0 * M_PI * (f1 * x / width_ + f2 * y / height_ + 0.1 * t +
                                                              phase + 0.33 * c));
          img.at(x, y, c) = static_cast<float>(v);
        }
    return img;
  }

  std::optional<Waveform> audio() override {
    if (!has_audio_) return std::nullopt;
    Waveform w;
    w.sample_rate = rate_;
    const auto n = static_cast<std::size_t>(std::llround(clip_.duration_s * rate_));
    w.samples.assign(n, 0.0f);
    if (silence_) return w;
    std::mt19937_64 rng(seed_);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      w.samples[i] = static_cast<float>(amp_ * std::sin(2.0 * M_PI * tone_ * i / rate_) + 0.02 * (u - 0.5));
    }
    return w;
  }

 private:
  MediaClip clip_;
  int width_ = 64, height_ = 48;
  bool has_audio_ = true, silence_ = false;
  double tone_ = 220, amp_ = 0.3, rate_ = kTargetSampleRate;
  std::uint64_t seed_ = 0;
};

std::filesystem::path strip_scheme(const std::string& uri) {
  const auto p = uri.find("://");
  return p == std::string::npos ? std::filesystem::path(uri) : std::filesystem::path(uri.substr(p + 3));
}

class WavSource final : public MediaSource {
 public:
  explicit WavSource(const MediaClip& clip) : clip_id_(clip.clip_id) {
    try {
      wave_ = read_wav(strip_scheme(clip.media_uri));
    } catch (const Error& e) {
      throw DecodeError(clip.clip_id, e.what());
    }
  }
  Image frame_at(double) override { throw DecodeError(clip_id_, "audio-only media has no frames"); }
  std::optional<Waveform> audio() override { return wave_; }

 private:
  std::string clip_id_;
  Waveform wave_;
};

/// Directory of frame_NNNNN.ppm files at the clip's fps, with optional audio.wav.
class FrameDirSource final : public MediaSource {
 public:
  explicit FrameDirSource(const MediaClip& clip) : clip_(clip), dir_(strip_scheme(clip.media_uri)) {
    if (!std::filesystem::is_directory(dir_)) throw DecodeError(clip.clip_id, "no such frame directory");
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm") files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end());
    if (files_.empty()) throw DecodeError(clip.clip_id, "frame directory holds no frame_*.ppm files");
  }

  Image frame_at(double t) override {
    const auto idx = std::clamp<long>(static_cast<long>(std::floor(t * clip_.fps + 1e-9)), 0,
                                      static_cast<long>(files_.size()) - 1);
    try {
      return decode_ppm(read_file(files_[static_cast<std::size_t>(idx)]));
    } catch (const Error& e) {
      throw DecodeError(clip_.clip_id, e.what());
    }
  }

  std::optional<Waveform> audio() override {
    const auto wav = dir_ / "audio.wav";
    if (!std::filesystem::exists(wav)) return std::nullopt;
    try {
      return read_wav(wav);
    } catch (const Error& e) {
      throw DecodeError(clip_.clip_id, e.what());
    }
  }

 private:
  MediaClip clip_;
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
};

}  // namespace

std::string media_scheme(const std::string& uri) {
  const auto p = uri.find("://");
  if (p != std::string::npos) return to_lower(uri.substr(0, p));
  const std::filesystem::path path(uri);
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) return "frames";
  auto ext = to_lower(path.extension().string());
  if (!ext.empty() && ext[0] == '.') ext.erase(0, 1);
  return ext;
}

DecoderRegistry::DecoderRegistry() {
  factories_["synthetic"] = [](const MediaClip& c) { return std::make_unique<SyntheticSource>(c); };
  factories_["wav"] = [](const MediaClip& c) { return std::make_unique<WavSource>(c); };
  factories_["frames"] = [](const MediaClip& c) { return std::make_unique<FrameDirSource>(c); };
}

DecoderRegistry& DecoderRegistry::instance() {
  static DecoderRegistry registry;
  return registry;
}

void DecoderRegistry::register_scheme(const std::string& scheme, DecoderFactory factory) {
  std::lock_guard lock(mutex_);
  factories_[to_lower(scheme)] = std::move(factory);
}

void DecoderRegistry::unregister_scheme(const std::string& scheme) {
  std::lock_guard lock(mutex_);
  factories_.erase(to_lower(scheme));
}

std::unique_ptr<MediaSource> DecoderRegistry::open(const MediaClip& clip) const {
  const auto scheme = media_scheme(clip.media_uri);
  DecoderFactory factory;
  {
    std::lock_guard lock(mutex_);
    const auto it = factories_.find(scheme);
    if (it == factories_.end())
      throw DecodeError(clip.clip_id, "no decoder registered for '" + scheme + "' media");
    factory = it->second;
  }
  return factory(clip);
}

std::unique_ptr<MediaSource> open_media(const MediaClip& clip) {
  return DecoderRegistry::instance().open(clip);
}

}  // namespace omni
