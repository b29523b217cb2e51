// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "model_internal.hpp"
#include "omni_emotion/error.hpp"

namespace omni {

LossResult next_token_loss(const Model& model, const Matrix& wrapped, const ChatIds& ids, ParamMap* grads,
                           Matrix* d_wrapped) {
  const auto& cfg = model.config();
  const int d = cfg.d_model;
  const int V = cfg.vocab;
  if (ids.target.empty()) throw PreconditionError("next_token_loss needs a non-empty target");
  if (wrapped.cols() != d) throw ShapeError("wrapped block does not match d_model");
  for (const auto* seq : {&ids.pre, &ids.post, &ids.target}) {
    for (int id : *seq) {
      if (id < 0 || id >= V) throw ValidationError("token_ids", "id " + std::to_string(id) + " outside vocabulary");
    }
  }

  const int n_pre = static_cast<int>(ids.pre.size());
  const int n_wrap = static_cast<int>(wrapped.rows());
  const int n_post = static_cast<int>(ids.post.size());
  const int m = static_cast<int>(ids.target.size());
  const int n = n_pre + n_wrap + n_post + m - 1;
  const int first_target_row = n_pre + n_wrap + n_post - 1;
  if (first_target_row < 0) throw PreconditionError("no context before the first target token");

  const Matrix& embed = model.param("decoder.embed");
  std::vector<int> row_token(n, -1);  // -1 for rows of the wrapped block
  Matrix X(n, d);
  {
    int r = 0;
    for (int id : ids.pre) row_token[r] = id, X.row(r++) = embed.row(id);
    X.middleRows(r, n_wrap) = wrapped;
    r += n_wrap;
    for (int id : ids.post) row_token[r] = id, X.row(r++) = embed.row(id);
    for (int k = 0; k + 1 < m; ++k) row_token[r] = ids.target[k], X.row(r++) = embed.row(ids.target[k]);
  }

  const Matrix& Wq = model.param("decoder.Wq");
  const Matrix& Wk = model.param("decoder.Wk");
  const Matrix& Wv = model.param("decoder.Wv");
  const Matrix& Wo = model.param("decoder.Wo");
  const Matrix& W_out = model.param("decoder.W_out");
  const Matrix& b_out = model.param("decoder.b_out");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  const Matrix Q = X * Wq;
  const Matrix K = X * Wk;
  const Matrix Vv = X * Wv;
  Matrix S = Q * K.transpose() * scale;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) S(i, j) = -std::numeric_limits<double>::infinity();
  }
  const Matrix P = detail::softmax_rows(S);
  const Matrix A = P * Vv;
  const Matrix H = X + A * Wo;

  const Matrix Hs = H.middleRows(first_target_row, m);
  Matrix logits = Hs * W_out;
  logits.rowwise() += b_out.row(0);

  long double total = 0.0L;
  Matrix probs(m, V);
  for (int k = 0; k < m; ++k) {
    const double mx = logits.row(k).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(k).array() - mx).exp().matrix();
    const double z = e.sum();
    probs.row(k) = e / z;
    const double log_p = logits(k, ids.target[k]) - mx - std::log(z);
    total += -static_cast<long double>(log_p);
  }
  const LossResult result{static_cast<double>(total / m), m};
  if (grads == nullptr) return result;

  Matrix dlogits = probs;
  for (int k = 0; k < m; ++k) dlogits(k, ids.target[k]) -= 1.0;
  dlogits /= static_cast<double>(m);

  grads->at("decoder.W_out") += Hs.transpose() * dlogits;
  grads->at("decoder.b_out") += dlogits.colwise().sum();
  Matrix dH = Matrix::Zero(n, d);
  dH.middleRows(first_target_row, m) = dlogits * W_out.transpose();

  Matrix dX = dH;
  grads->at("decoder.Wo") += A.transpose() * dH;
  const Matrix dA = dH * Wo.transpose();
  const Matrix dVv = P.transpose() * dA;
  const Matrix dS = detail::softmax_rows_backward(P, dA * Vv.transpose()) * scale;
  const Matrix dQ = dS * K;
  const Matrix dK = dS.transpose() * Q;
  grads->at("decoder.Wq") += X.transpose() * dQ;
  grads->at("decoder.Wk") += X.transpose() * dK;
  grads->at("decoder.Wv") += X.transpose() * dVv;
  dX += dQ * Wq.transpose() + dK * Wk.transpose() + dVv * Wv.transpose();

  Matrix& d_embed = grads->at("decoder.embed");
  for (int r = 0; r < n; ++r) {
    if (row_token[r] >= 0) d_embed.row(row_token[r]) += dX.row(r);
  }
  if (d_wrapped) *d_wrapped = dX.middleRows(n_pre, n_wrap);
  return result;
}

LossResult example_loss(const Model& model, const ModelInput& input, ParamMap* grads) {
  const auto& cfg = model.config();
  const int d = cfg.d_model;
  const int lf = cfg.face_tokens_per_frame();

  // audio
  detail::ProjectorTrace audio_trace;
  std::optional<Matrix> audio_tokens;
  if (input.audio_features && input.audio_features->rows() > 0) {
    audio_tokens = detail::projector_forward(model, "audio_projector", *input.audio_features, audio_trace);
  }

  // vision: visual projector, face fusion + facial projector, then fusion
  const int T = static_cast<int>(input.visual_features.size());
  detail::ProjectorTrace visual_trace, facial_trace;
  detail::FusionTrace fusion_trace;
  std::vector<Matrix> visual, facial;
  std::vector<int> face_frames;  // frames that carry a face
  std::vector<Matrix> face_cat, face_u;
  std::optional<Matrix> fused;
  if (T > 0) {
    const int lv = static_cast<int>(input.visual_features.front().rows());
    Matrix stacked(static_cast<Eigen::Index>(T) * lv, input.visual_features.front().cols());
    for (int t = 0; t < T; ++t) {
      if (input.visual_features[t].rows() != lv || input.visual_features[t].cols() != stacked.cols()) {
        throw ShapeError("visual frames differ in shape");
      }
      stacked.middleRows(static_cast<Eigen::Index>(t) * lv, lv) = input.visual_features[t];
    }
    const Matrix projected = detail::projector_forward(model, "visual_projector", stacked, visual_trace);
    for (int t = 0; t < T; ++t) visual.push_back(projected.middleRows(static_cast<Eigen::Index>(t) * lv, lv));

    if (!input.face_scales.empty()) {
      if (static_cast<int>(input.face_scales.size()) != T) throw ShapeError("face entries must match visual frames");
      const int cat_w = cfg.face_scales * cfg.face_channels;
      for (int t = 0; t < T; ++t) {
        if (!input.face_scales[t]) continue;
        const auto& scales = *input.face_scales[t];
        if (static_cast<int>(scales.size()) != cfg.face_scales) {
          throw ShapeError("expected " + std::to_string(cfg.face_scales) + " face scales, got " +
                           std::to_string(scales.size()));
        }
        Matrix cat(lf, cat_w);
        for (int s = 0; s < cfg.face_scales; ++s) {
          if (scales[s].rows() != lf || scales[s].cols() != cfg.face_channels) {
            throw ShapeError("face scale " + std::to_string(s) + " has the wrong shape");
          }
          cat.middleCols(s * cfg.face_channels, cfg.face_channels) = scales[s];
        }
        Matrix u = cat * model.param("face_fusion.W");
        u.rowwise() += model.param("face_fusion.b").row(0);
        face_frames.push_back(t);
        face_cat.push_back(std::move(cat));
        face_u.push_back(std::move(u));
      }
      facial.assign(T, Matrix::Zero(lf, d));
      if (!face_frames.empty()) {
        Matrix fused_maps(static_cast<Eigen::Index>(face_frames.size()) * lf, cfg.face_fused_channels);
        for (std::size_t i = 0; i < face_frames.size(); ++i) {
          fused_maps.middleRows(static_cast<Eigen::Index>(i) * lf, lf) =
              face_u[i].unaryExpr([](double v) { return gelu(v); });
        }
        const Matrix ft = detail::projector_forward(model, "facial_projector", fused_maps, facial_trace);
        for (std::size_t i = 0; i < face_frames.size(); ++i) {
          facial[face_frames[i]] = ft.middleRows(static_cast<Eigen::Index>(i) * lf, lf);
        }
      }
    }
    fused = detail::fuse_forward(model, cfg.fusion, visual, facial, fusion_trace);
  }

  detail::WrapSpans spans;
  const Matrix wrapped = detail::wrap_forward(model, fused ? &*fused : nullptr,
                                              audio_tokens ? &*audio_tokens : nullptr, spans);
  Matrix d_wrapped;
  const LossResult result = next_token_loss(model, wrapped, input.ids, grads, grads ? &d_wrapped : nullptr);
  if (grads == nullptr) return result;

  Matrix& d_markers = grads->at("decoder.markers");
  d_markers.row(kViStart) += d_wrapped.row(0);
  d_markers.row(kViEnd) += d_wrapped.row(spans.vision_start + spans.vision_len);
  d_markers.row(kAuStart) += d_wrapped.row(spans.audio_start - 1);
  d_markers.row(kAuEnd) += d_wrapped.row(spans.audio_start + spans.audio_len);

  if (audio_tokens) {
    detail::projector_backward(model, "audio_projector", audio_trace,
                               d_wrapped.middleRows(spans.audio_start, spans.audio_len), *grads);
  }
  if (fused) {
    std::vector<Matrix> d_visual, d_facial;
    detail::fuse_backward(model, fusion_trace, visual, facial,
                          d_wrapped.middleRows(spans.vision_start, spans.vision_len), *grads, d_visual, d_facial);
    const int lv = fusion_trace.lv;
    Matrix d_stacked(static_cast<Eigen::Index>(T) * lv, d);
    for (int t = 0; t < T; ++t) d_stacked.middleRows(static_cast<Eigen::Index>(t) * lv, lv) = d_visual[t];
    detail::projector_backward(model, "visual_projector", visual_trace, d_stacked, *grads);

    if (!face_frames.empty()) {
      Matrix d_ft(static_cast<Eigen::Index>(face_frames.size()) * lf, d);
      for (std::size_t i = 0; i < face_frames.size(); ++i) {
        d_ft.middleRows(static_cast<Eigen::Index>(i) * lf, lf) = d_facial[face_frames[i]];
      }
      const Matrix d_maps = detail::projector_backward(model, "facial_projector", facial_trace, d_ft, *grads);
      for (std::size_t i = 0; i < face_frames.size(); ++i) {
        const Matrix du = d_maps.middleRows(static_cast<Eigen::Index>(i) * lf, lf)
                              .cwiseProduct(face_u[i].unaryExpr([](double v) { return gelu_grad(v); }));
        grads->at("face_fusion.W") += face_cat[i].transpose() * du;
        grads->at("face_fusion.b") += du.colwise().sum();
      }
    }
  }
  return result;
}

}  // namespace omni
