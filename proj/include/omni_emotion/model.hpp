// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "omni_emotion/corpus.hpp"
#include "omni_emotion/linalg.hpp"
#include "omni_emotion/media.hpp"

namespace omni {

enum class FusionVariant { FRAME_CONCAT, CROSS_ATTENTION, VIDEO_CONCAT };
std::string_view to_string(FusionVariant v);
FusionVariant parse_fusion_variant(std::string_view name);

enum class Modality { VISUAL, FACIAL, AUDIO, FUSED, TEXT };
std::string_view to_string(Modality m);

struct ModelConfig {
  int d_model = 256;
  int vocab = 512;
  int n_mels = 128;
  int audio_channels = 64;
  int projector_hidden = 256;
  int visual_grid = 14;  // L_v = visual_grid^2
  int visual_channels = 64;
  int face_grid = 4;  // L_f = face_grid^2
  int face_scales = 3;
  int face_channels = 16;  // per scale
  int face_fused_channels = 32;
  int max_frames = 16;  // rows of pos_table
  FusionVariant fusion = FusionVariant::VIDEO_CONCAT;
  std::uint64_t seed = 0;

  int visual_tokens_per_frame() const { return visual_grid * visual_grid; }
  int face_tokens_per_frame() const { return face_grid * face_grid; }
  /// Cells per side of scale s (s = 0 is the finest).
  int scale_cells(int s) const { return 1 << (face_scales - 1 - s); }

  void validate() const;
  /// Small dimensions for tests and desk-scale runs.
  static ModelConfig toy();
};

json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j, ModelConfig base = {});

using ParamMap = std::map<std::string, Matrix>;

/// Block a parameter belongs to: the name up to the first '.'.
std::string block_of(const std::string& param_name);

/// Blocks that have a gradient path from the loss. The encoder stubs are
/// always frozen.
const std::set<std::string>& trainable_capable_blocks();

class Model {
 public:
  static Model init(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamMap& params() const noexcept { return params_; }
  ParamMap& params() noexcept { return params_; }
  const Matrix& param(const std::string& name) const;
  Matrix& param(const std::string& name);
  std::set<std::string> blocks() const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  json to_json() const;
  static Model from_json(const json& j);

 private:
  ModelConfig config_;
  ParamMap params_;
};

/// Zero gradients for every parameter in the gradient-capable blocks.
ParamMap zero_grads(const Model& model);

// ---------------------------------------------------------------------------
// Token sequences and the frozen encoder stubs
// ---------------------------------------------------------------------------

struct FusionLayout {
  FusionVariant variant = FusionVariant::VIDEO_CONCAT;
  int frames = 0;
  int visual_per_frame = 0;
  int facial_per_frame = 0;
};

struct TokenSequence {
  Matrix tokens;  // [L x d_model]
  Modality modality = Modality::TEXT;
  std::optional<FusionLayout> layout;

  int length() const { return static_cast<int>(tokens.rows()); }
};

/// Mel frames -> stride-2 conv stage (kernel 3, pad 1) -> linear -> mean
/// pooling with stride 3. Rows are tokens, columns the encoder channels.
Matrix audio_encoder_features(const Model& model, const MelSpectrogram& mel);
/// Token count for F mel frames: floor(ceil(F / 2) / 3).
int audio_token_count(int mel_frames);

/// Patch features on a visual_grid x visual_grid grid. [L_v x C_v]
Matrix visual_encoder_features(const Model& model, const Image& frame);

/// One feature map per scale, each resampled to the face_grid x face_grid
/// token grid. Map s has shape [L_f x face_channels].
std::vector<Matrix> face_encoder_scales(const Model& model, const Image& crop);

/// MLP fusion of the scale maps into one [L_f x face_fused_channels] map.
Matrix fuse_face_scales(const Model& model, const std::vector<Matrix>& scales);

// ---------------------------------------------------------------------------
// Projectors and modality encoders
// ---------------------------------------------------------------------------

/// Tanh-approximated GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

/// Two affine layers with GELU between them, using <prefix>.W1/b1/W2/b2.
Matrix project(const Model& model, const std::string& prefix, const Matrix& x);

TokenSequence encode_audio(const Model& model, const MelSpectrogram& mel);

/// Per-frame crops (nullopt for a frame without a face) to FACIAL tokens;
/// faceless frames contribute L_f zero tokens.
TokenSequence encode_faces(const Model& model, const std::vector<std::optional<Image>>& crops_per_frame);

/// Per-frame visual tokens through the visual projector.
std::vector<Matrix> encode_visual(const Model& model, const std::vector<Image>& frames);

// ---------------------------------------------------------------------------
// Fusion and wrapping
// ---------------------------------------------------------------------------

TokenSequence fuse_frame_concat(const Model& model, const std::vector<Matrix>& visual,
                                const std::vector<Matrix>& facial);
TokenSequence fuse_cross_attention(const Model& model, const std::vector<Matrix>& visual,
                                   const std::vector<Matrix>& facial, std::vector<Matrix>* attention_out = nullptr);
TokenSequence fuse_video_concat(const Model& model, const std::vector<Matrix>& visual,
                                const std::vector<Matrix>& facial);
TokenSequence fuse(const Model& model, FusionVariant variant, const std::vector<Matrix>& visual,
                   const std::vector<Matrix>& facial);

/// Closed-form fused length T * (L_v + L_f), identical for every variant.
int fused_length(int frames, int visual_per_frame, int facial_per_frame);

enum Marker { kViStart = 0, kViEnd = 1, kAuStart = 2, kAuEnd = 3 };

/// [vi_start, vision, vi_end, au_start, audio, au_end]; an absent modality is
/// one zero token.
TokenSequence wrap_modalities(const Model& model, const std::optional<TokenSequence>& vision,
                              const std::optional<TokenSequence>& audio);

// ---------------------------------------------------------------------------
// Tokenizer and decoder objective
// ---------------------------------------------------------------------------

/// Whitespace/punctuation tokenizer hashing words into the vocabulary above
/// the reserved ids.
class ToyTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kImStart = 2;
  static constexpr int kImEnd = 3;
  static constexpr int kUser = 4;
  static constexpr int kAssistant = 5;
  static constexpr int kFirstWordId = 6;

  explicit ToyTokenizer(int vocab);
  std::vector<int> encode(std::string_view text) const;
  int vocab_size() const noexcept { return vocab_; }

 private:
  int vocab_;
};

/// Token ids around the wrapped modal block in the chat template.
struct ChatIds {
  std::vector<int> pre;     // before the modal block
  std::vector<int> post;    // prompt and assistant header after it
  std::vector<int> target;  // answer followed by im_end
};

ChatIds build_chat_ids(const ToyTokenizer& tokenizer, const std::string& prompt, const std::string& answer);

struct LossResult {
  double loss = 0.0;
  int targets = 0;
};

/// Mean NLL of the target ids under teacher forcing, given the wrapped modal
/// block. When grads is set, gradients are added into it (and into d_wrapped
/// when that is set too).
LossResult next_token_loss(const Model& model, const Matrix& wrapped, const ChatIds& ids, ParamMap* grads = nullptr,
                           Matrix* d_wrapped = nullptr);

/// Frozen-encoder outputs for one example; the trainable path starts here.
struct ModelInput {
  std::optional<Matrix> audio_features;  // [n_a x C_a]
  std::vector<Matrix> visual_features;   // per frame [L_v x C_v]; empty: no vision
  /// Per frame scale maps, or nullopt for a faceless frame. Empty: no facial
  /// path. Otherwise one entry per visual frame.
  std::vector<std::optional<std::vector<Matrix>>> face_scales;
  ChatIds ids;
};

/// Full forward pass (projectors, fusion, wrapping, decoder) with optional
/// backward into grads.
LossResult example_loss(const Model& model, const ModelInput& input, ParamMap* grads = nullptr);

}  // namespace omni
