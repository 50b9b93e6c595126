#pragma once

#include <array>

#include "acnet/raster.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

struct FocalLossConfig {
  double gamma = 2.0;      // focusing exponent, >= 0; 0 reduces to cross-entropy
  int ignore_index = 0;    // class excluded from the loss and its denominator
};

// Mean over scored pixels of -(1 - p_t)^gamma * log(p_t), where p_t is the
// softmax probability of the true class. Fused softmax+loss node on the tape.
// Throws if every pixel is ignored or a label falls outside [0, K).
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const IntRaster& labels, const FocalLossConfig& cfg);

// Mean of the five side-output losses, each scored against the label map
// shrunk to that output's resolution.
template <typename T>
Tensor<T> deep_supervision_loss(const std::array<Tensor<T>, 5>& heads, const IntRaster& labels,
                                const FocalLossConfig& cfg);

// Keeps the top-left sample of each factor x factor block.
IntRaster downsample_labels_nearest(const IntRaster& labels, int factor);

}  // namespace acnet
