// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Forward/backward pieces shared by the fusion and decoder translation units.

#pragma once

#include <vector>

#include "omni_emotion/model.hpp"

namespace omni::detail {

struct ProjectorTrace {
  Matrix x;
  Matrix u;  // pre-activation of the hidden layer
  Matrix h;  // gelu(u)
};

Matrix projector_forward(const Model& model, const std::string& prefix, const Matrix& x, ProjectorTrace& trace);
/// Adds parameter gradients into grads and returns dL/dx.
Matrix projector_backward(const Model& model, const std::string& prefix, const ProjectorTrace& trace,
                          const Matrix& dy, ParamMap& grads);

struct FusionTrace {
  FusionVariant variant = FusionVariant::VIDEO_CONCAT;
  int frames = 0;
  int lv = 0;
  int lf = 0;
  // cross-attention caches, one per frame
  std::vector<Matrix> q, k, v, p;
};

Matrix fuse_forward(const Model& model, FusionVariant variant, const std::vector<Matrix>& visual,
                    const std::vector<Matrix>& facial, FusionTrace& trace);
void fuse_backward(const Model& model, const FusionTrace& trace, const std::vector<Matrix>& visual,
                   const std::vector<Matrix>& facial, const Matrix& d_fused, ParamMap& grads,
                   std::vector<Matrix>& d_visual, std::vector<Matrix>& d_facial);

struct WrapSpans {
  int vision_start = 0;
  int vision_len = 0;
  bool vision_present = false;
  int audio_start = 0;
  int audio_len = 0;
  bool audio_present = false;
};

Matrix wrap_forward(const Model& model, const Matrix* vision, const Matrix* audio, WrapSpans& spans);

/// Row-wise softmax; entries at -inf give probability 0.
Matrix softmax_rows(const Matrix& s);
/// Given P = softmax(S) row-wise and dL/dP, returns dL/dS.
Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp);

}  // namespace omni::detail
