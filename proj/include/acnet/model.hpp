#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acnet/acm.hpp"
#include "acnet/rng.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

enum class BlockKind { kBasic, kBottleneck };

// kFull: three branches with attention-gated fusion.
// kModel1: RGB and depth branches only, fused by plain summation.
// kModel2: adds the separate fusion branch but still sums without gates.
enum class Variant { kFull, kModel1, kModel2 };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct StageSpec {
  int blocks = 1;
  int channels = 16;  // stage output channels (bottleneck mid width is a quarter)
  BlockKind kind = BlockKind::kBasic;
  int stride = 1;     // applied by the first block
};

struct AcnetConfig {
  int in_rgb = 3;
  int in_depth = 1;
  int classes = 6;
  int stem = 16;
  int stem_kernel = 3;  // stride-2 stem conv
  std::vector<StageSpec> stages;  // exactly 4
  Variant variant = Variant::kFull;

  // Small configuration that trains in minutes on a CPU.
  static AcnetConfig desk(int classes);
  // Bottleneck-resnet sizing used by the full-scale network.
  static AcnetConfig paper(int classes);

  void validate() const;
  // Channels of the five fused maps F0..F4 (stem + four stages).
  std::vector<int> fused_channels() const;
  // Output channels of the five decoder stages (halving from the deepest map).
  std::vector<int> decoder_channels() const;
};

template <typename T>
struct ConvParams {
  Tensor<T> w;
  Tensor<T> b;  // undefined when a norm layer follows
};

template <typename T>
struct BnParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  BnRunningStats<T> stats;
};

template <typename T>
struct BlockParams {
  BlockKind kind = BlockKind::kBasic;
  int stride = 1;
  ConvParams<T> conv1, conv2, conv3;  // conv3 only for bottlenecks
  BnParams<T> bn1, bn2, bn3;
  bool has_down = false;
  ConvParams<T> down;  // 1x1 projection shortcut
  BnParams<T> down_bn;
};

template <typename T>
struct StageParams {
  std::vector<BlockParams<T>> blocks;
};

template <typename T>
struct BranchParams {
  ConvParams<T> stem;  // undefined for the fusion branch
  BnParams<T> stem_bn;
  std::array<StageParams<T>, 4> stages;
};

template <typename T>
struct AcmSet {
  AcmParams<T> stem;
  std::array<AcmParams<T>, 4> layer;
};

template <typename T>
struct DecoderStageParams {
  ConvParams<T> skip;   // 1x1 adapter from the encoder map, with bias
  ConvParams<T> tconv;  // 2x2 stride-2 upsampler, no bias (norm follows)
  BnParams<T> bn;
  ConvParams<T> head;   // 1x1 class scores off this stage, with bias
};

template <typename T>
struct ModelParams {
  AcnetConfig cfg;
  BranchParams<T> rgb, depth;
  BranchParams<T> fuse;  // stages only; present for kModel2 and kFull
  AcmSet<T> acm_rgb, acm_depth;  // present for kFull
  std::array<DecoderStageParams<T>, 5> decoder;
};

// Intermediate activations captured during a forward pass.
template <typename T>
struct ForwardTrace {
  std::array<Tensor<T>, 5> rgb;     // stem output then the four stage outputs
  std::array<Tensor<T>, 5> depth;
  std::array<Tensor<T>, 5> fused;   // F0..F4
  std::array<Tensor<T>, 5> acm_rgb_v, acm_depth_v;  // gate weights when gates ran
};

template <typename T>
struct ModelOutput {
  // Side outputs from coarsest (1/16 of the input) to native resolution.
  std::array<Tensor<T>, 5> heads;
  const Tensor<T>& final_logits() const { return heads[4]; }
};

// Builds and initializes every parameter for the configured variant. The
// construction order is fixed, so a given rng state yields identical weights.
template <typename T>
ModelParams<T> init_model(const AcnetConfig& cfg, Rng& rng);

// Runs the network. `mode` selects batch-vs-running statistics in the norm
// layers (train mode updates the running buffers as a side effect).
// `bypass_gates` short-circuits every attention gate to the identity.
template <typename T>
ModelOutput<T> model_forward(ModelParams<T>& m, const Tensor<T>& rgb, const Tensor<T>& depth,
                             BnMode mode, ForwardTrace<T>* trace = nullptr,
                             bool bypass_gates = false);

// Visits every trainable tensor as (name, tensor, weight_decay_applies).
// Order is fixed and stable across runs; names are unique.
template <typename T>
void for_each_param(ModelParams<T>& m,
                    const std::function<void(const std::string&, Tensor<T>&, bool)>& fn);

// Visits every norm layer as (name, params) for running-stat serialization.
template <typename T>
void for_each_bn(ModelParams<T>& m,
                 const std::function<void(const std::string&, BnParams<T>&)>& fn);

// Number of trainable scalars in a built model.
template <typename T>
std::int64_t param_count(ModelParams<T>& m);

// Same number predicted from the configuration alone.
std::int64_t expected_param_count(const AcnetConfig& cfg);
// Trainable scalars in the attention gates of the full variant.
std::int64_t gate_param_count(const AcnetConfig& cfg);

}  // namespace acnet
