#pragma once

#include <map>
#include <string>
#include <vector>

#include "acnet/config.hpp"
#include "acnet/data.hpp"
#include "acnet/metrics.hpp"
#include "acnet/model.hpp"

namespace acnet {

// Momentum buffers keyed by parameter name. An absent entry means zero
// velocity; sgd_step materializes it on first use.
struct SgdState {
  std::map<std::string, std::vector<double>> velocity;
};

// Per tensor: g = grad + weight_decay * w (decay skipped for norm affine
// parameters and biases), v = momentum * v + g, w -= lr * v.
void sgd_step(ModelParams<double>& params, SgdState& state, double lr, double momentum,
              double weight_decay);

// base_lr * factor^floor(epoch / every).
double lr_schedule(double base_lr, double factor, int every, int epoch);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainSetup {
  RunConfig cfg;
  std::vector<Sample> data;   // raw samples; augmentation and normalization happen inside
  std::string out_dir;
  std::string resume_path;    // continue from this checkpoint when non-empty
};

struct TrainOutput {
  RunConfig cfg;              // the config actually trained (the checkpoint's on resume)
  NormStats norm;
  ModelParams<double> params;
  SgdState opt;
  std::vector<EpochLog> log;  // this invocation's epochs only
  bool bn_ready = false;
  std::string final_checkpoint;  // <out_dir>/ckpt_final.acnt
};

// Shuffled mini-batch SGD over the deep-supervision objective. Every random
// stream is derived from (seed, purpose, epoch, sample index), so reruns and
// resumed runs retrace the identical trajectory. Writes train_log.csv and
// checkpoints into out_dir; throws if the loss leaves the finite range.
TrainOutput run_training(const TrainSetup& setup);

// Full-resolution argmax over the final decoder output, accumulated into a
// confusion matrix. Needs initialized norm-layer running statistics.
ConfusionMatrix evaluate_model(ModelParams<double>& params, const std::vector<Sample>& data,
                               const NormStats& norm, int batch_size);

struct AttnRow {
  int acm_id = 0;
  std::string branch;  // "rgb" or "depth"
  std::string stage;   // "conv" or "layer1".."layer4"
  double avg = 0, sd = 0, min = 0, max = 0;
};

// Gate statistics over a dataset: per gate, the per-channel mean of the
// attention weight across samples, then mean/std/min/max over channels.
// Rows 0-4 are the rgb gates (conv, layer1..4), rows 5-9 the depth gates.
std::vector<AttnRow> attention_stats(ModelParams<double>& params, const std::vector<Sample>& data,
                                     const NormStats& norm);

// header acm_id,branch,stage,avg,std,min,max; six decimal places.
std::string attn_stats_csv(const std::vector<AttnRow>& rows);

// Single-sample class-id prediction (eval mode, final head).
IntRaster infer_labels(ModelParams<double>& params, const Sample& raw, const NormStats& norm);

}  // namespace acnet
