// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/model.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "omni_emotion/error.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

std::string_view to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::FRAME_CONCAT: return "frame_concat";
    case FusionVariant::CROSS_ATTENTION: return "cross_attention";
    case FusionVariant::VIDEO_CONCAT: return "video_concat";
  }
  return "unknown";
}

FusionVariant parse_fusion_variant(std::string_view name) {
  const std::string n = to_lower(trim(name));
  if (n == "frame_concat") return FusionVariant::FRAME_CONCAT;
  if (n == "cross_attention") return FusionVariant::CROSS_ATTENTION;
  if (n == "video_concat") return FusionVariant::VIDEO_CONCAT;
  throw ConfigError("unknown fusion variant '" + std::string(name) + "'");
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::VISUAL: return "VISUAL";
    case Modality::FACIAL: return "FACIAL";
    case Modality::AUDIO: return "AUDIO";
    case Modality::FUSED: return "FUSED";
    case Modality::TEXT: return "TEXT";
  }
  return "UNKNOWN";
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ValidationError(field, "must be > 0");
  };
  positive(d_model, "d_model");
  positive(n_mels, "n_mels");
  positive(audio_channels, "audio_channels");
  positive(projector_hidden, "projector_hidden");
  positive(visual_grid, "visual_grid");
  positive(visual_channels, "visual_channels");
  positive(face_grid, "face_grid");
  positive(face_scales, "face_scales");
  positive(face_channels, "face_channels");
  positive(face_fused_channels, "face_fused_channels");
  positive(max_frames, "max_frames");
  if (vocab <= ToyTokenizer::kFirstWordId) throw ValidationError("vocab", "must exceed the reserved ids");
  if ((face_grid & (face_grid - 1)) != 0) throw ValidationError("face_grid", "must be a power of two");
  if (face_scales > 16) throw ValidationError("face_scales", "must be <= 16");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.d_model = 8;
  c.vocab = 40;
  c.n_mels = 128;
  c.audio_channels = 6;
  c.projector_hidden = 7;
  c.visual_grid = 2;
  c.visual_channels = 5;
  c.face_grid = 2;
  c.face_scales = 3;
  c.face_channels = 3;
  c.face_fused_channels = 4;
  c.max_frames = 8;
  return c;
}

json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"vocab", c.vocab},
          {"n_mels", c.n_mels},
          {"audio_channels", c.audio_channels},
          {"projector_hidden", c.projector_hidden},
          {"visual_grid", c.visual_grid},
          {"visual_channels", c.visual_channels},
          {"face_grid", c.face_grid},
          {"face_scales", c.face_scales},
          {"face_channels", c.face_channels},
          {"face_fused_channels", c.face_fused_channels},
          {"max_frames", c.max_frames},
          {"fusion", std::string(to_string(c.fusion))},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  try {
    c.d_model = j.value("d_model", c.d_model);
    c.vocab = j.value("vocab", c.vocab);
    c.n_mels = j.value("n_mels", c.n_mels);
    c.audio_channels = j.value("audio_channels", c.audio_channels);
    c.projector_hidden = j.value("projector_hidden", c.projector_hidden);
    c.visual_grid = j.value("visual_grid", c.visual_grid);
    c.visual_channels = j.value("visual_channels", c.visual_channels);
    c.face_grid = j.value("face_grid", c.face_grid);
    c.face_scales = j.value("face_scales", c.face_scales);
    c.face_channels = j.value("face_channels", c.face_channels);
    c.face_fused_channels = j.value("face_fused_channels", c.face_fused_channels);
    c.max_frames = j.value("max_frames", c.max_frames);
    if (j.contains("fusion")) c.fusion = parse_fusion_variant(j["fusion"].get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string block_of(const std::string& param_name) { return param_name.substr(0, param_name.find('.')); }

const std::set<std::string>& trainable_capable_blocks() {
  static const std::set<std::string> blocks{"audio_projector", "visual_projector", "facial_projector",
                                            "face_fusion",     "fusion",           "pos_table",
                                            "decoder"};
  return blocks;
}

// ---------------------------------------------------------------------------

namespace {

Matrix random_matrix(std::uint64_t seed, const std::string& name, int rows, int cols, double scale) {
  std::mt19937_64 rng(derive_seed(seed, name));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
  return m;
}

void add_projector(ParamMap& p, std::uint64_t seed, const std::string& prefix, int in, int hidden, int out) {
  p[prefix + ".W1"] = random_matrix(seed, prefix + ".W1", in, hidden, 1.0 / std::sqrt(in));
  p[prefix + ".b1"] = Matrix::Zero(1, hidden);
  p[prefix + ".W2"] = random_matrix(seed, prefix + ".W2", hidden, out, 1.0 / std::sqrt(hidden));
  p[prefix + ".b2"] = Matrix::Zero(1, out);
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  try {
    const auto rows = j.at("shape").at(0).get<Eigen::Index>();
    const auto cols = j.at("shape").at(1).get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw FormatError("size mismatch");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
    return m;
  } catch (const std::exception& e) {
    throw FormatError("checkpoint parameter '" + name + "': " + e.what());
  }
}

}  // namespace

Model Model::init(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config_ = config;
  ParamMap& p = m.params_;
  const auto seed = config.seed;
  const int d = config.d_model;

  // frozen encoder stubs
  const int conv_in = 3 * config.n_mels;
  p["audio_encoder.W_conv"] =
      random_matrix(seed, "audio_encoder.W_conv", conv_in, config.audio_channels, 1.0 / std::sqrt(conv_in));
  p["audio_encoder.b_conv"] = Matrix::Zero(1, config.audio_channels);
  p["audio_encoder.W_lin"] = random_matrix(seed, "audio_encoder.W_lin", config.audio_channels, config.audio_channels,
                                           1.0 / std::sqrt(config.audio_channels));
  p["audio_encoder.b_lin"] = Matrix::Zero(1, config.audio_channels);
  p["visual_encoder.W_patch"] = random_matrix(seed, "visual_encoder.W_patch", 3, config.visual_channels, 1.0);
  p["visual_encoder.b_patch"] = Matrix::Zero(1, config.visual_channels);
  p["visual_encoder.pos"] = random_matrix(seed, "visual_encoder.pos", config.visual_tokens_per_frame(),
                                          config.visual_channels, 0.1);
  for (int s = 0; s < config.face_scales; ++s) {
    const std::string w = "face_encoder.W" + std::to_string(s);
    p[w] = random_matrix(seed, w, 3, config.face_channels, 1.0);
    p["face_encoder.b" + std::to_string(s)] = Matrix::Zero(1, config.face_channels);
  }

  // trainable blocks
  add_projector(p, seed, "audio_projector", config.audio_channels, config.projector_hidden, d);
  add_projector(p, seed, "visual_projector", config.visual_channels, config.projector_hidden, d);
  add_projector(p, seed, "facial_projector", config.face_fused_channels, config.projector_hidden, d);
  const int fused_in = config.face_scales * config.face_channels;
  p["face_fusion.W"] =
      random_matrix(seed, "face_fusion.W", fused_in, config.face_fused_channels, 1.0 / std::sqrt(fused_in));
  p["face_fusion.b"] = Matrix::Zero(1, config.face_fused_channels);
  for (const char* name : {"fusion.attn.Wq", "fusion.attn.Wk", "fusion.attn.Wv"}) {
    p[name] = random_matrix(seed, name, d, d, 1.0 / std::sqrt(d));
  }
  p["pos_table"] = random_matrix(seed, "pos_table", config.max_frames, d, 0.02);
  p["decoder.embed"] = random_matrix(seed, "decoder.embed", config.vocab, d, 1.0 / std::sqrt(d));
  p["decoder.markers"] = random_matrix(seed, "decoder.markers", 4, d, 1.0 / std::sqrt(d));
  for (const char* name : {"decoder.Wq", "decoder.Wk", "decoder.Wv", "decoder.Wo"}) {
    p[name] = random_matrix(seed, name, d, d, 1.0 / std::sqrt(d));
  }
  p["decoder.W_out"] = random_matrix(seed, "decoder.W_out", d, config.vocab, 1.0 / std::sqrt(d));
  p["decoder.b_out"] = Matrix::Zero(1, config.vocab);
  return m;
}

const Matrix& Model::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter '" + name + "'");
  return it->second;
}

Matrix& Model::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter '" + name + "'");
  return it->second;
}

std::set<std::string> Model::blocks() const {
  std::set<std::string> out;
  for (const auto& [name, _] : params_) out.insert(block_of(name));
  return out;
}

json Model::to_json() const {
  json params = json::object();
  for (const auto& [name, m] : params_) params[name] = matrix_to_json(m);
  return {{"format", "omni-emotion-checkpoint"}, {"version", 1}, {"config", omni::to_json(config_)}, {"params", params}};
}

Model Model::from_json(const json& j) {
  if (j.value("format", std::string()) != "omni-emotion-checkpoint") throw FormatError("not a checkpoint file");
  if (j.value("version", 0) != 1) throw FormatError("unsupported checkpoint version");
  Model m = Model::init(model_config_from_json(j.at("config")));
  const json& params = j.at("params");
  for (auto& [name, value] : m.params_) {
    if (!params.contains(name)) throw FormatError("checkpoint lacks parameter '" + name + "'");
    Matrix loaded = matrix_from_json(params[name], name);
    if (loaded.rows() != value.rows() || loaded.cols() != value.cols()) {
      throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    value = std::move(loaded);
  }
  for (const auto& [name, _] : params.items()) {
    if (!m.params_.count(name)) throw FormatError("checkpoint has unknown parameter '" + name + "'");
  }
  return m;
}

void Model::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump()); }

Model Model::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw FormatError("cannot parse checkpoint " + path.string() + ": " + e.what());
  }
}

ParamMap zero_grads(const Model& model) {
  ParamMap g;
  for (const auto& [name, m] : model.params()) {
    if (trainable_capable_blocks().count(block_of(name))) g[name] = Matrix::Zero(m.rows(), m.cols());
  }
  return g;
}

// ---------------------------------------------------------------------------
// Encoder stubs
// ---------------------------------------------------------------------------

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

int audio_token_count(int mel_frames) {
  if (mel_frames <= 0) return 0;
  return ((mel_frames + 1) / 2) / 3;
}

Matrix audio_encoder_features(const Model& model, const MelSpectrogram& mel) {
  const auto& cfg = model.config();
  if (mel.channels() != cfg.n_mels) {
    throw ShapeError("mel has " + std::to_string(mel.channels()) + " channels, encoder expects " +
                     std::to_string(cfg.n_mels));
  }
  const int F = mel.frames();
  const int conv_frames = (F + 1) / 2;
  const int tokens = conv_frames / 3;
  // fixed input scaling keeps log energies (down to ln 1e-10) in a tame range
  const Matrix x = mel.values.transpose() * 0.1;  // [F x n_mels]
  Matrix windows = Matrix::Zero(conv_frames, 3 * cfg.n_mels);
  for (int j = 0; j < conv_frames; ++j) {
    for (int k = 0; k < 3; ++k) {
      const int src = 2 * j - 1 + k;
      if (src >= 0 && src < F) windows.block(j, k * cfg.n_mels, 1, cfg.n_mels) = x.row(src);
    }
  }
  Matrix h = windows * model.param("audio_encoder.W_conv");
  h.rowwise() += model.param("audio_encoder.b_conv").row(0);
  h = h.unaryExpr([](double v) { return gelu(v); });
  Matrix e = h * model.param("audio_encoder.W_lin");
  e.rowwise() += model.param("audio_encoder.b_lin").row(0);

  Matrix pooled(tokens, cfg.audio_channels);
  for (int t = 0; t < tokens; ++t) pooled.row(t) = e.middleRows(3 * t, 3).colwise().mean();
  return pooled;
}

namespace {

Matrix cell_features(const Image& img, const Matrix& W, const Matrix& b) {
  Matrix rgb(static_cast<Eigen::Index>(img.width) * img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) rgb(y * img.width + x, c) = img.at(x, y, c);
    }
  }
  Matrix f = rgb * W;
  f.rowwise() += b.row(0);
  return f.array().tanh().matrix();
}

/// Average-pools or nearest-upsamples an n x n cell map to g x g.
Matrix to_grid(const Matrix& cells, int n, int g) {
  if (n == g) return cells;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(g) * g, cells.cols());
  if (n > g) {
    const int f = n / g;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) out.row((y / f) * g + x / f) += cells.row(y * n + x);
    }
    out /= static_cast<double>(f * f);
  } else {
    const int f = g / n;
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) out.row(y * g + x) = cells.row((y / f) * n + x / f);
    }
  }
  return out;
}

Matrix gelu_of(const Matrix& m) { return m.unaryExpr([](double v) { return gelu(v); }); }

}  // namespace

Matrix visual_encoder_features(const Model& model, const Image& frame) {
  if (frame.empty()) throw PreconditionError("visual encoder got an empty frame");
  const int g = model.config().visual_grid;
  const Image small = resize_area(frame, g, g);
  return cell_features(small, model.param("visual_encoder.W_patch"), model.param("visual_encoder.b_patch")) +
         model.param("visual_encoder.pos");
}

std::vector<Matrix> face_encoder_scales(const Model& model, const Image& crop) {
  if (crop.empty()) throw PreconditionError("face encoder got an empty crop");
  const auto& cfg = model.config();
  std::vector<Matrix> maps;
  for (int s = 0; s < cfg.face_scales; ++s) {
    const int n = cfg.scale_cells(s);
    const Image cells = resize_area(crop, n, n);
    const Matrix f = cell_features(cells, model.param("face_encoder.W" + std::to_string(s)),
                                   model.param("face_encoder.b" + std::to_string(s)));
    maps.push_back(to_grid(f, n, cfg.face_grid));
  }
  return maps;
}

Matrix fuse_face_scales(const Model& model, const std::vector<Matrix>& scales) {
  const auto& cfg = model.config();
  if (static_cast<int>(scales.size()) != cfg.face_scales) {
    throw ShapeError("expected " + std::to_string(cfg.face_scales) + " face scales, got " +
                     std::to_string(scales.size()));
  }
  const int L = cfg.face_tokens_per_frame();
  Matrix cat(L, cfg.face_scales * cfg.face_channels);
  for (int s = 0; s < cfg.face_scales; ++s) {
    if (scales[s].rows() != L || scales[s].cols() != cfg.face_channels) {
      throw ShapeError("face scale " + std::to_string(s) + " has the wrong shape");
    }
    cat.middleCols(s * cfg.face_channels, cfg.face_channels) = scales[s];
  }
  Matrix u = cat * model.param("face_fusion.W");
  u.rowwise() += model.param("face_fusion.b").row(0);
  return gelu_of(u);
}

Matrix project(const Model& model, const std::string& prefix, const Matrix& x) {
  const Matrix& W1 = model.param(prefix + ".W1");
  if (x.cols() != W1.rows()) {
    throw ShapeError(prefix + " expects " + std::to_string(W1.rows()) + " input features, got " +
                     std::to_string(x.cols()));
  }
  Matrix u = x * W1;
  u.rowwise() += model.param(prefix + ".b1").row(0);
  Matrix y = gelu_of(u) * model.param(prefix + ".W2");
  y.rowwise() += model.param(prefix + ".b2").row(0);
  return y;
}

TokenSequence encode_audio(const Model& model, const MelSpectrogram& mel) {
  return {project(model, "audio_projector", audio_encoder_features(model, mel)), Modality::AUDIO, std::nullopt};
}

TokenSequence encode_faces(const Model& model, const std::vector<std::optional<Image>>& crops_per_frame) {
  const auto& cfg = model.config();
  const int L = cfg.face_tokens_per_frame();
  Matrix tokens = Matrix::Zero(static_cast<Eigen::Index>(crops_per_frame.size()) * L, cfg.d_model);
  for (std::size_t t = 0; t < crops_per_frame.size(); ++t) {
    if (!crops_per_frame[t]) continue;
    const Matrix fused = fuse_face_scales(model, face_encoder_scales(model, *crops_per_frame[t]));
    tokens.middleRows(static_cast<Eigen::Index>(t) * L, L) = project(model, "facial_projector", fused);
  }
  return {std::move(tokens), Modality::FACIAL, std::nullopt};
}

std::vector<Matrix> encode_visual(const Model& model, const std::vector<Image>& frames) {
  std::vector<Matrix> out;
  for (const auto& f : frames) out.push_back(project(model, "visual_projector", visual_encoder_features(model, f)));
  return out;
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

ToyTokenizer::ToyTokenizer(int vocab) : vocab_(vocab) {
  if (vocab <= kFirstWordId) throw ValidationError("vocab", "must exceed the reserved ids");
}

std::vector<int> ToyTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  const auto span = static_cast<std::uint64_t>(vocab_ - kFirstWordId);
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    ids.push_back(kFirstWordId + static_cast<int>(fnv1a64(word) % span));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && ch != '\'' && ch != '-') {
      flush();
      word = std::string(1, ch);
      flush();
    } else {
      word += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return ids;
}

ChatIds build_chat_ids(const ToyTokenizer& tokenizer, const std::string& prompt, const std::string& answer) {
  ChatIds ids;
  ids.pre = {ToyTokenizer::kImStart, ToyTokenizer::kUser};
  ids.post = tokenizer.encode(prompt);
  ids.post.insert(ids.post.end(), {ToyTokenizer::kImEnd, ToyTokenizer::kImStart, ToyTokenizer::kAssistant});
  ids.target = tokenizer.encode(answer);
  ids.target.push_back(ToyTokenizer::kImEnd);
  return ids;
}

}  // namespace omni
