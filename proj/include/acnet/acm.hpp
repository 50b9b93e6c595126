#pragma once

#include "acnet/rng.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

// Channel-attention gate: squeezes a feature map to per-channel means, mixes
// them with a learned 1x1 convolution, and rescales the map by the resulting
// sigmoid weights.
template <typename T>
struct AcmParams {
  Tensor<T> w;  // C x C x 1 x 1 channel mixer
  Tensor<T> b;  // C

  int channels() const { return w.defined() ? w.dim(0) : 0; }
};

template <typename T>
struct AcmOutput {
  Tensor<T> gated;    // input scaled channel-wise by the weights
  Tensor<T> weights;  // N x C x 1 x 1, each entry in (0, 1)
};

template <typename T>
AcmOutput<T> acm_forward(const Tensor<T>& a, const AcmParams<T>& p);

// Mixer gets a uniform Kaiming fill (bound sqrt(6 / C)); bias starts at zero.
template <typename T>
AcmParams<T> init_acm(int channels, Rng& rng);

using AcmParamsF = AcmParams<float>;
using AcmParamsD = AcmParams<double>;

}  // namespace acnet
