#include "acnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "acnet/checkpoint.hpp"
#include "acnet/loss.hpp"

namespace fs = std::filesystem;

namespace acnet {

namespace {

// Distinct purposes draw from distinct derived seeds; nothing shares a
// stream, so shuffling can never perturb augmentation and vice versa.
constexpr std::uint64_t kInitStream = 0x101;
constexpr std::uint64_t kShuffleStream = 0x202;
constexpr std::uint64_t kAugmentStream = 0x303;

std::uint64_t augment_seed(std::uint64_t seed, int epoch, int sample_index) {
  return mix_seed(mix_seed(seed, kAugmentStream, static_cast<std::uint64_t>(epoch)),
                  static_cast<std::uint64_t>(sample_index));
}

void write_log_file(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("train: cannot write " + path);
  f << "epoch,lr,loss\n";
  for (const auto& row : log) {
    f << row.epoch << ',' << format_double_roundtrip(row.lr) << ','
      << format_double_roundtrip(row.loss) << '\n';
  }
}

bool running_stats_ready(ModelParams<double>& params) {
  bool ready = true;
  for_each_bn<double>(params, [&](const std::string&, BnParams<double>& bn) {
    if (!bn.stats.initialized) ready = false;
  });
  return ready;
}

void check_labels(const std::vector<Sample>& data, int classes) {
  for (const Sample& s : data) {
    for (const std::int32_t v : s.label) {
      if (v < 0 || v >= classes) {
        throw std::invalid_argument("dataset contains class id " + std::to_string(v) +
                                    " but the model scores " + std::to_string(classes) +
                                    " classes");
      }
    }
  }
}

std::vector<Sample> normalize_all(const std::vector<Sample>& data, const NormStats& norm,
                                  std::size_t from, std::size_t count) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(normalize_sample(data[from + i], norm));
  return out;
}

std::vector<int> iota_indices(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

void sgd_step(ModelParams<double>& params, SgdState& state, double lr, double momentum,
              double weight_decay) {
  for_each_param<double>(params, [&](const std::string& name, Tensor<double>& t, bool decay) {
    auto w = t.data();
    auto g = t.grad();
    if (g.size() != w.size()) {
      throw std::runtime_error("sgd_step: no gradient buffer for '" + name + "'");
    }
    auto& v = state.velocity[name];
    if (v.empty()) v.assign(w.size(), 0.0);
    if (v.size() != w.size()) {
      throw std::runtime_error("sgd_step: velocity size mismatch for '" + name + "'");
    }
    const double wd = decay ? weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + wd * w[i];
      v[i] = momentum * v[i] + gi;
      w[i] -= lr * v[i];
    }
  });
}

double lr_schedule(double base_lr, double factor, int every, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  if (every < 1) throw std::invalid_argument("lr_schedule: decay interval must be at least 1");
  return base_lr * std::pow(factor, epoch / every);
}

TrainOutput run_training(const TrainSetup& setup) {
  if (setup.data.empty()) throw std::invalid_argument("train: dataset is empty");
  if (setup.out_dir.empty()) throw std::invalid_argument("train: output directory not set");
  fs::create_directories(setup.out_dir);

  TrainOutput out;
  int start_epoch = 0;
  std::array<std::uint64_t, 2> rng_state{};

  if (!setup.resume_path.empty()) {
    // The checkpoint's embedded config governs the continuation; mixing in a
    // different caller config would silently change the trajectory.
    LoadedCheckpoint loaded = load_checkpoint(setup.resume_path);
    out.cfg = loaded.cfg;
    out.params = std::move(loaded.params);
    out.opt = std::move(loaded.opt);
    out.norm = loaded.norm;
    out.bn_ready = loaded.bn_ready;
    start_epoch = loaded.epoch;
    rng_state = loaded.rng_state;
  } else {
    out.cfg = setup.cfg;
    out.cfg.validate();
    switch (out.cfg.norm_mode) {
      case NormMode::kSynth: out.norm = synth_norm_stats(setup.data); break;
      case NormMode::kDataset: out.norm = compute_norm_stats(setup.data); break;
      case NormMode::kManual: out.norm = out.cfg.norm; break;
    }
    Rng init_rng(mix_seed(out.cfg.train.seed, kInitStream));
    out.params = init_model<double>(out.cfg.model, init_rng);
    rng_state = Rng(out.cfg.train.seed).state();
  }
  const RunConfig& cfg = out.cfg;
  check_labels(setup.data, cfg.model.classes);
  if (!cfg.augment.enabled) {
    for (const Sample& s : setup.data) {
      if (s.h % 32 != 0 || s.w % 32 != 0) {
        throw std::invalid_argument(
            "train: with augmentation disabled every sample must have extents divisible by 32");
      }
    }
  }

  const int n = static_cast<int>(setup.data.size());
  const FocalLossConfig loss_cfg{2.0, 0};
  const std::string log_path = setup.out_dir + "/train_log.csv";
  write_log_file(log_path, out.log);

  for (int epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
    const double lr =
        lr_schedule(cfg.train.lr, cfg.train.lr_decay_factor, cfg.train.lr_decay_every, epoch);
    std::vector<int> order = iota_indices(n);
    Rng shuffle_rng(mix_seed(cfg.train.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    for (int b0 = 0; b0 < n; b0 += cfg.train.batch_size) {
      const int bsz = std::min(cfg.train.batch_size, n - b0);
      std::vector<Sample> prepared;
      prepared.reserve(static_cast<std::size_t>(bsz));
      for (int i = 0; i < bsz; ++i) {
        const int idx = order[static_cast<std::size_t>(b0 + i)];
        Sample s = setup.data[static_cast<std::size_t>(idx)];
        if (cfg.augment.enabled) {
          Rng ar(augment_seed(cfg.train.seed, epoch, idx));
          const AugmentDraw d = draw_augment(cfg.augment, s.h, s.w, ar);
          s = apply_augment(s, cfg.augment, d);
        }
        prepared.push_back(normalize_sample(s, out.norm));
      }
      Batch batch = make_batch(prepared, iota_indices(bsz));

      for_each_param<double>(out.params,
                             [](const std::string&, Tensor<double>& t, bool) { t.zero_grad(); });
      ModelOutput<double> mo =
          model_forward<double>(out.params, batch.rgb, batch.depth, BnMode::kTrain);
      TensorD loss = deep_supervision_loss<double>(mo.heads, batch.labels, loss_cfg);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw std::runtime_error("train: diverged, loss is non-finite at epoch " +
                                 std::to_string(epoch));
      }
      loss.backward();
      sgd_step(out.params, out.opt, lr, cfg.train.momentum, cfg.train.weight_decay);
      loss_sum += lv * bsz;
      out.bn_ready = true;
    }

    out.log.push_back({epoch, lr, loss_sum / n});
    write_log_file(log_path, out.log);

    const int done = epoch + 1;
    if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0 &&
        done < cfg.train.epochs) {
      char name[40];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.acnt", done);
      save_checkpoint(setup.out_dir + "/" + name, cfg, out.params, &out.opt, done, rng_state,
                      out.norm, out.bn_ready);
    }
  }

  out.final_checkpoint = setup.out_dir + "/ckpt_final.acnt";
  save_checkpoint(out.final_checkpoint, cfg, out.params, &out.opt,
                  std::max(start_epoch, cfg.train.epochs), rng_state, out.norm, out.bn_ready);
  return out;
}

ConfusionMatrix evaluate_model(ModelParams<double>& params, const std::vector<Sample>& data,
                               const NormStats& norm, int batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch size must be at least 1");
  if (!running_stats_ready(params)) {
    throw std::runtime_error("evaluate: model carries no running statistics; train it first");
  }
  check_labels(data, params.cfg.classes);

  ConfusionMatrix cm(params.cfg.classes, 0);
  NoGradGuard guard;
  for (std::size_t b0 = 0; b0 < data.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t bsz = std::min(static_cast<std::size_t>(batch_size), data.size() - b0);
    const auto prepared = normalize_all(data, norm, b0, bsz);
    Batch batch = make_batch(prepared, iota_indices(static_cast<int>(bsz)));
    ModelOutput<double> mo = model_forward<double>(params, batch.rgb, batch.depth, BnMode::kEval);
    cm.update(argmax_labels(mo.heads[4]), batch.labels);
  }
  return cm;
}

std::vector<AttnRow> attention_stats(ModelParams<double>& params, const std::vector<Sample>& data,
                                     const NormStats& norm) {
  if (params.cfg.variant != Variant::kFull) {
    throw std::invalid_argument("attention stats: the " + variant_name(params.cfg.variant) +
                                " variant has no attention gates");
  }
  if (data.empty()) throw std::invalid_argument("attention stats: dataset is empty");

  // A trained model reports inference-mode weights; an untrained one falls
  // back to batch statistics so the gates still produce defined values.
  const BnMode mode = running_stats_ready(params) ? BnMode::kEval : BnMode::kTrain;
  NoGradGuard guard;
  const auto prepared = normalize_all(data, norm, 0, data.size());
  Batch batch = make_batch(prepared, iota_indices(static_cast<int>(data.size())));
  ForwardTrace<double> trace;
  model_forward<double>(params, batch.rgb, batch.depth, mode, &trace);

  std::vector<AttnRow> rows;
  const auto collect = [&rows](const Tensor<double>& v, const std::string& branch,
                               const std::string& stage) {
    const int n = v.dim(0), c = v.dim(1);
    std::vector<double> per_channel(static_cast<std::size_t>(c), 0.0);
    const auto vals = v.data();
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < c; ++k) {
        per_channel[static_cast<std::size_t>(k)] += vals[static_cast<std::size_t>(i * c + k)];
      }
    }
    for (auto& m : per_channel) m /= n;
    double avg = 0, sq = 0;
    double lo = per_channel[0], hi = per_channel[0];
    for (const double m : per_channel) {
      avg += m;
      sq += m * m;
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    avg /= c;
    const double var = std::max(0.0, sq / c - avg * avg);
    AttnRow row;
    row.acm_id = static_cast<int>(rows.size());
    row.branch = branch;
    row.stage = stage;
    row.avg = avg;
    row.sd = std::sqrt(var);
    row.min = lo;
    row.max = hi;
    rows.push_back(row);
  };

  const char* stage_names[5] = {"conv", "layer1", "layer2", "layer3", "layer4"};
  for (int i = 0; i < 5; ++i) {
    collect(trace.acm_rgb_v[static_cast<std::size_t>(i)], "rgb", stage_names[i]);
  }
  for (int i = 0; i < 5; ++i) {
    collect(trace.acm_depth_v[static_cast<std::size_t>(i)], "depth", stage_names[i]);
  }
  return rows;
}

std::string attn_stats_csv(const std::vector<AttnRow>& rows) {
  std::string out = "acm_id,branch,stage,avg,std,min,max\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.6f,%.6f,%.6f,%.6f\n", r.acm_id, r.branch.c_str(),
                  r.stage.c_str(), r.avg, r.sd, r.min, r.max);
    out += buf;
  }
  return out;
}

IntRaster infer_labels(ModelParams<double>& params, const Sample& raw, const NormStats& norm) {
  if (!running_stats_ready(params)) {
    throw std::runtime_error("infer: model carries no running statistics; train it first");
  }
  NoGradGuard guard;
  const std::vector<Sample> prepared = {normalize_sample(raw, norm)};
  Batch batch = make_batch(prepared, {0});
  ModelOutput<double> mo = model_forward<double>(params, batch.rgb, batch.depth, BnMode::kEval);
  return argmax_labels(mo.heads[4]);
}

}  // namespace acnet
