// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "model_internal.hpp"
#include "omni_emotion/error.hpp"

namespace omni {

namespace detail {

Matrix projector_forward(const Model& model, const std::string& prefix, const Matrix& x, ProjectorTrace& trace) {
  const Matrix& W1 = model.param(prefix + ".W1");
  if (x.cols() != W1.rows()) {
    throw ShapeError(prefix + " expects " + std::to_string(W1.rows()) + " input features, got " +
                     std::to_string(x.cols()));
  }
  trace.x = x;
  trace.u = x * W1;
  trace.u.rowwise() += model.param(prefix + ".b1").row(0);
  trace.h = trace.u.unaryExpr([](double v) { return gelu(v); });
  Matrix y = trace.h * model.param(prefix + ".W2");
  y.rowwise() += model.param(prefix + ".b2").row(0);
  return y;
}

Matrix projector_backward(const Model& model, const std::string& prefix, const ProjectorTrace& trace,
                          const Matrix& dy, ParamMap& grads) {
  grads.at(prefix + ".W2") += trace.h.transpose() * dy;
  grads.at(prefix + ".b2") += dy.colwise().sum();
  Matrix du = (dy * model.param(prefix + ".W2").transpose())
                  .cwiseProduct(trace.u.unaryExpr([](double v) { return gelu_grad(v); }));
  grads.at(prefix + ".W1") += trace.x.transpose() * du;
  grads.at(prefix + ".b1") += du.colwise().sum();
  return du * model.param(prefix + ".W1").transpose();
}

Matrix softmax_rows(const Matrix& s) {
  Matrix p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double e = std::isinf(s(i, j)) && s(i, j) < 0 ? 0.0 : std::exp(s(i, j) - m);
      p(i, j) = e;
      z += e;
    }
    p.row(i) /= z;
  }
  return p;
}

Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
  const Eigen::VectorXd dots = p.cwiseProduct(dp).rowwise().sum();
  Matrix ds = dp;
  ds.colwise() -= dots;
  return p.cwiseProduct(ds);
}

namespace {

enum class Src { kVisual, kFacial, kAttended };

struct Segment {
  Src src;
  int frame;
};

std::vector<Segment> segments_for(FusionVariant variant, int frames) {
  std::vector<Segment> out;
  switch (variant) {
    case FusionVariant::FRAME_CONCAT:
      for (int t = 0; t < frames; ++t) out.insert(out.end(), {{Src::kVisual, t}, {Src::kFacial, t}});
      break;
    case FusionVariant::CROSS_ATTENTION:
      for (int t = 0; t < frames; ++t) out.insert(out.end(), {{Src::kVisual, t}, {Src::kAttended, t}});
      break;
    case FusionVariant::VIDEO_CONCAT:
      for (int t = 0; t < frames; ++t) out.push_back({Src::kVisual, t});
      for (int t = 0; t < frames; ++t) out.push_back({Src::kFacial, t});
      break;
  }
  return out;
}

void check_inputs(const Model& model, const std::vector<Matrix>& visual, const std::vector<Matrix>& facial,
                  int& lv, int& lf) {
  const int d = model.config().d_model;
  if (visual.empty()) throw ShapeError("fusion needs at least one visual frame");
  if (!facial.empty() && facial.size() != visual.size()) {
    throw ShapeError("visual has " + std::to_string(visual.size()) + " frames, facial has " +
                     std::to_string(facial.size()));
  }
  if (static_cast<int>(visual.size()) > model.config().max_frames) {
    throw ShapeError("more frames than pos_table rows");
  }
  lv = static_cast<int>(visual.front().rows());
  lf = facial.empty() ? 0 : static_cast<int>(facial.front().rows());
  for (const auto& v : visual) {
    if (v.cols() != d) throw ShapeError("visual tokens have width " + std::to_string(v.cols()) + ", expected " + std::to_string(d));
    if (v.rows() != lv) throw ShapeError("visual frames differ in token count");
  }
  for (const auto& f : facial) {
    if (f.rows() > 0 && f.cols() != d) {
      throw ShapeError("facial tokens have width " + std::to_string(f.cols()) + ", expected " + std::to_string(d));
    }
    if (f.rows() != lf) throw ShapeError("facial frames differ in token count");
  }
}

}  // namespace

Matrix fuse_forward(const Model& model, FusionVariant variant, const std::vector<Matrix>& visual,
                    const std::vector<Matrix>& facial, FusionTrace& trace) {
  int lv = 0, lf = 0;
  check_inputs(model, visual, facial, lv, lf);
  const int T = static_cast<int>(visual.size());
  const int d = model.config().d_model;
  trace = FusionTrace{variant, T, lv, lf, {}, {}, {}, {}};

  std::vector<Matrix> attended;
  if (variant == FusionVariant::CROSS_ATTENTION && lf > 0) {
    const Matrix& Wq = model.param("fusion.attn.Wq");
    const Matrix& Wk = model.param("fusion.attn.Wk");
    const Matrix& Wv = model.param("fusion.attn.Wv");
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int t = 0; t < T; ++t) {
      trace.q.push_back(facial[t] * Wq);
      trace.k.push_back(visual[t] * Wk);
      trace.v.push_back(visual[t] * Wv);
      trace.p.push_back(softmax_rows(trace.q.back() * trace.k.back().transpose() * scale));
      attended.push_back(trace.p.back() * trace.v.back());
    }
  }

  const Matrix& pos = model.param("pos_table");
  Matrix out(fused_length(T, lv, lf), d);
  Eigen::Index row = 0;
  for (const auto& seg : segments_for(variant, T)) {
    const Matrix* block = nullptr;
    switch (seg.src) {
      case Src::kVisual: block = &visual[seg.frame]; break;
      case Src::kFacial: block = lf > 0 ? &facial[seg.frame] : nullptr; break;
      case Src::kAttended: block = lf > 0 ? &attended[seg.frame] : nullptr; break;
    }
    if (block == nullptr || block->rows() == 0) continue;
    auto dst = out.middleRows(row, block->rows());
    dst = *block;
    dst.rowwise() += pos.row(seg.frame);
    row += block->rows();
  }
  return out;
}

void fuse_backward(const Model& model, const FusionTrace& trace, const std::vector<Matrix>& visual,
                   const std::vector<Matrix>& facial, const Matrix& d_fused, ParamMap& grads,
                   std::vector<Matrix>& d_visual, std::vector<Matrix>& d_facial) {
  const int T = trace.frames;
  const int d = model.config().d_model;
  d_visual.assign(T, Matrix::Zero(trace.lv, d));
  d_facial.assign(T, Matrix::Zero(trace.lf, d));
  std::vector<Matrix> d_attended(T, Matrix::Zero(trace.lf, d));
  Matrix& d_pos = grads.at("pos_table");

  Eigen::Index row = 0;
  for (const auto& seg : segments_for(trace.variant, T)) {
    const int len = seg.src == Src::kVisual ? trace.lv : trace.lf;
    if (len == 0) continue;
    const auto g = d_fused.middleRows(row, len);
    d_pos.row(seg.frame) += g.colwise().sum();
    switch (seg.src) {
      case Src::kVisual: d_visual[seg.frame] += g; break;
      case Src::kFacial: d_facial[seg.frame] += g; break;
      case Src::kAttended: d_attended[seg.frame] += g; break;
    }
    row += len;
  }

  if (trace.variant == FusionVariant::CROSS_ATTENTION && trace.lf > 0) {
    const Matrix& Wq = model.param("fusion.attn.Wq");
    const Matrix& Wk = model.param("fusion.attn.Wk");
    const Matrix& Wv = model.param("fusion.attn.Wv");
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int t = 0; t < T; ++t) {
      const Matrix& dA = d_attended[t];
      const Matrix dV = trace.p[t].transpose() * dA;
      const Matrix dS = softmax_rows_backward(trace.p[t], dA * trace.v[t].transpose()) * scale;
      const Matrix dQ = dS * trace.k[t];
      const Matrix dK = dS.transpose() * trace.q[t];
      grads.at("fusion.attn.Wq") += facial[t].transpose() * dQ;
      grads.at("fusion.attn.Wk") += visual[t].transpose() * dK;
      grads.at("fusion.attn.Wv") += visual[t].transpose() * dV;
      d_facial[t] += dQ * Wq.transpose();
      d_visual[t] += dK * Wk.transpose() + dV * Wv.transpose();
    }
  }
}

Matrix wrap_forward(const Model& model, const Matrix* vision, const Matrix* audio, WrapSpans& spans) {
  if (vision == nullptr && audio == nullptr) {
    throw PreconditionError("wrap_modalities: both modalities absent, nothing to condition on");
  }
  const int d = model.config().d_model;
  if (vision && vision->cols() != d) throw ShapeError("vision tokens do not match d_model");
  if (audio && audio->cols() != d) throw ShapeError("audio tokens do not match d_model");
  const Matrix& markers = model.param("decoder.markers");
  const int nv = vision ? static_cast<int>(vision->rows()) : 1;
  const int na = audio ? static_cast<int>(audio->rows()) : 1;
  Matrix out = Matrix::Zero(nv + na + 4, d);
  out.row(0) = markers.row(kViStart);
  if (vision) out.middleRows(1, nv) = *vision;
  out.row(1 + nv) = markers.row(kViEnd);
  out.row(2 + nv) = markers.row(kAuStart);
  if (audio) out.middleRows(3 + nv, na) = *audio;
  out.row(3 + nv + na) = markers.row(kAuEnd);
  spans = WrapSpans{1, nv, vision != nullptr, 3 + nv, na, audio != nullptr};
  return out;
}

}  // namespace detail

int fused_length(int frames, int visual_per_frame, int facial_per_frame) {
  return frames * (visual_per_frame + facial_per_frame);
}

namespace {

TokenSequence fused_sequence(const Model& model, FusionVariant variant, const std::vector<Matrix>& visual,
                             const std::vector<Matrix>& facial, detail::FusionTrace& trace) {
  Matrix tokens = detail::fuse_forward(model, variant, visual, facial, trace);
  return {std::move(tokens), Modality::FUSED, FusionLayout{variant, trace.frames, trace.lv, trace.lf}};
}

}  // namespace

TokenSequence fuse_frame_concat(const Model& model, const std::vector<Matrix>& visual,
                                const std::vector<Matrix>& facial) {
  detail::FusionTrace trace;
  return fused_sequence(model, FusionVariant::FRAME_CONCAT, visual, facial, trace);
}

TokenSequence fuse_cross_attention(const Model& model, const std::vector<Matrix>& visual,
                                   const std::vector<Matrix>& facial, std::vector<Matrix>* attention_out) {
  detail::FusionTrace trace;
  TokenSequence out = fused_sequence(model, FusionVariant::CROSS_ATTENTION, visual, facial, trace);
  if (attention_out) *attention_out = trace.p;
  return out;
}

TokenSequence fuse_video_concat(const Model& model, const std::vector<Matrix>& visual,
                                const std::vector<Matrix>& facial) {
  detail::FusionTrace trace;
  return fused_sequence(model, FusionVariant::VIDEO_CONCAT, visual, facial, trace);
}

TokenSequence fuse(const Model& model, FusionVariant variant, const std::vector<Matrix>& visual,
                   const std::vector<Matrix>& facial) {
  detail::FusionTrace trace;
  return fused_sequence(model, variant, visual, facial, trace);
}

TokenSequence wrap_modalities(const Model& model, const std::optional<TokenSequence>& vision,
                              const std::optional<TokenSequence>& audio) {
  detail::WrapSpans spans;
  Matrix tokens = detail::wrap_forward(model, vision ? &vision->tokens : nullptr, audio ? &audio->tokens : nullptr,
                                       spans);
  return {std::move(tokens), Modality::FUSED, vision ? vision->layout : std::nullopt};
}

}  // namespace omni
