// Command-line front end: train / eval / infer / synth-data / attn-stats /
// grad-check over the acnet_core library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "../vendor/CLI11.hpp"
#include "acnet/checkpoint.hpp"
#include "acnet/config.hpp"
#include "acnet/data.hpp"
#include "acnet/gradcheck.hpp"
#include "acnet/image.hpp"
#include "acnet/metrics.hpp"
#include "acnet/model.hpp"
#include "acnet/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "flat key = value configuration file");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "override train.seed and synth.seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

acnet::RunConfig load_run_config(const CommonOpts& opts) {
  acnet::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = acnet::parse_config_file(opts.config_path);
  if (opts.seed_set) {
    cfg.train.seed = opts.seed;
    cfg.synth.seed = opts.seed;
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

// Dataset selection shared by train/eval/attn-stats: an explicit directory
// wins, then a synth-spec file, then the synth block of the main config.
std::vector<acnet::Sample> resolve_dataset(acnet::RunConfig& cfg, const std::string& dataset_dir,
                                           const std::string& synth_file) {
  if (!dataset_dir.empty() && !synth_file.empty()) {
    throw std::runtime_error("pass either --dataset or --synth, not both");
  }
  if (!dataset_dir.empty()) {
    cfg.data_dir = dataset_dir;
    return acnet::load_dataset(dataset_dir);
  }
  if (!synth_file.empty()) {
    const acnet::RunConfig synth_cfg = acnet::parse_config_file(synth_file);
    cfg.synth = synth_cfg.synth;
  }
  if (!cfg.data_dir.empty()) return acnet::load_dataset(cfg.data_dir);
  return acnet::synth_generate(cfg.synth);
}

int cmd_train(const CommonOpts& common, const std::string& variant, const std::string& dataset_dir,
              const std::string& synth_file, const std::string& resume) {
  acnet::RunConfig cfg = load_run_config(common);
  if (!variant.empty()) cfg.model.variant = acnet::variant_from_name(variant);

  acnet::TrainSetup setup;
  setup.data = resolve_dataset(cfg, dataset_dir, synth_file);
  setup.cfg = cfg;
  setup.out_dir = common.out_dir;
  setup.resume_path = resume;

  const acnet::TrainOutput result = acnet::run_training(setup);
  std::printf("trained %zu epoch(s); final checkpoint: %s\n", result.log.size(),
              result.final_checkpoint.c_str());
  if (!result.log.empty()) {
    std::printf("last epoch %d: lr %s, loss %s\n", result.log.back().epoch,
                acnet::format_double_roundtrip(result.log.back().lr).c_str(),
                acnet::format_double_roundtrip(result.log.back().loss).c_str());
  }
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt_path,
             const std::string& dataset_dir, const std::string& synth_file) {
  acnet::LoadedCheckpoint ckpt = acnet::load_checkpoint(ckpt_path);
  std::vector<acnet::Sample> data = resolve_dataset(ckpt.cfg, dataset_dir, synth_file);
  const acnet::ConfusionMatrix cm =
      acnet::evaluate_model(ckpt.params, data, ckpt.norm, ckpt.cfg.train.batch_size);
  const std::string csv = cm.to_csv();
  fs::create_directories(common.out_dir);
  write_text(common.out_dir + "/metrics.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_infer(const CommonOpts& common, const std::string& ckpt_path, const std::string& rgb_path,
              const std::string& depth_path) {
  acnet::LoadedCheckpoint ckpt = acnet::load_checkpoint(ckpt_path);
  const acnet::RgbImage rgb = acnet::read_rgb_png(rgb_path);
  const acnet::Gray16Image depth = acnet::read_gray16_png(depth_path);
  if (rgb.h != depth.h || rgb.w != depth.w) {
    throw std::runtime_error("infer: color and depth images disagree on size");
  }
  if (rgb.h % 32 != 0 || rgb.w % 32 != 0) {
    throw std::runtime_error("infer: image extents must be divisible by 32");
  }
  acnet::Sample s(rgb.h, rgb.w);
  for (int y = 0; y < rgb.h; ++y) {
    for (int x = 0; x < rgb.w; ++x) {
      for (int c = 0; c < 3; ++c) s.rgb_at(c, y, x) = rgb.at(y, x, c) / 255.0;
      s.depth_at(y, x) = depth.at(y, x) / 1000.0;
    }
  }
  const acnet::IntRaster pred = acnet::infer_labels(ckpt.params, s, ckpt.norm);

  acnet::Gray8Image ids(pred.h, pred.w);
  for (int y = 0; y < pred.h; ++y) {
    for (int x = 0; x < pred.w; ++x) {
      ids.at(y, x) = static_cast<std::uint8_t>(pred.at(0, y, x));
    }
  }
  fs::create_directories(common.out_dir);
  acnet::write_gray8_png(common.out_dir + "/prediction.png", ids);
  acnet::write_rgb_png(common.out_dir + "/prediction_color.png", acnet::colorize_labels(ids));
  std::printf("wrote %s/prediction.png and %s/prediction_color.png\n", common.out_dir.c_str(),
              common.out_dir.c_str());
  return 0;
}

int cmd_synth_data(const CommonOpts& common, const std::string& synth_file) {
  acnet::RunConfig cfg = load_run_config(common);
  if (!synth_file.empty()) {
    const acnet::RunConfig synth_cfg = acnet::parse_config_file(synth_file);
    cfg.synth = synth_cfg.synth;
    if (common.seed_set) cfg.synth.seed = common.seed;
  }
  const std::vector<acnet::Sample> samples = acnet::synth_generate(cfg.synth);
  acnet::save_dataset(common.out_dir, samples);
  std::printf("wrote %d sample(s) (%dx%d, %d classes, cue mode %s) under %s\n", cfg.synth.count,
              cfg.synth.size, cfg.synth.size, cfg.synth.classes,
              acnet::cue_mode_name(cfg.synth.cue_mode).c_str(), common.out_dir.c_str());
  return 0;
}

int cmd_attn_stats(const CommonOpts& common, const std::string& ckpt_path,
                   const std::string& dataset_dir, const std::string& synth_file) {
  acnet::LoadedCheckpoint ckpt = acnet::load_checkpoint(ckpt_path);
  std::vector<acnet::Sample> data = resolve_dataset(ckpt.cfg, dataset_dir, synth_file);
  const auto rows = acnet::attention_stats(ckpt.params, data, ckpt.norm);
  const std::string csv = acnet::attn_stats_csv(rows);
  fs::create_directories(common.out_dir);
  write_text(common.out_dir + "/attn_stats.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_grad_check(const CommonOpts& common, int seeds_per_op) {
  const std::uint64_t seed = common.seed_set ? common.seed : 7;
  const auto results = acnet::run_gradient_suite(seed, seeds_per_op);
  bool all_ok = true;
  for (const auto& r : results) {
    std::printf("%-28s %s  max rel %.3e  max abs %.3e\n", r.name.c_str(),
                r.passed ? "ok  " : "FAIL", r.max_rel_err, r.max_abs_err);
    all_ok = all_ok && r.passed;
  }
  std::printf("%s\n", all_ok ? "gradient suite passed" : "gradient suite FAILED");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale three-branch segmentation network over color + depth input"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string variant, dataset_dir, synth_file, resume, ckpt_path, rgb_path, depth_path;
  int seeds_per_op = 5;

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, common);
  train->add_option("--variant", variant, "full | model1 | model2");
  train->add_option("--dataset", dataset_dir, "dataset directory (rgb/depth/label layout)");
  train->add_option("--synth", synth_file, "generate scenes from this spec file");
  train->add_option("--resume", resume, "continue from this checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  add_common(eval, common);
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--dataset", dataset_dir, "dataset directory");
  eval->add_option("--synth", synth_file, "generate scenes from this spec file");

  CLI::App* infer = app.add_subcommand("infer", "predict classes for one color/depth pair");
  add_common(infer, common);
  infer->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  infer->add_option("--rgb", rgb_path, "8-bit RGB PNG")->required();
  infer->add_option("--depth", depth_path, "16-bit depth PNG (millimeters)")->required();

  CLI::App* synth = app.add_subcommand("synth-data", "generate scenes to the dataset layout");
  add_common(synth, common);
  synth->add_option("--synth", synth_file, "spec file overriding the config's synth block");

  CLI::App* attn = app.add_subcommand("attn-stats", "attention gate statistics over a dataset");
  add_common(attn, common);
  attn->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  attn->add_option("--dataset", dataset_dir, "dataset directory");
  attn->add_option("--synth", synth_file, "generate scenes from this spec file");

  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference check of every operation");
  add_common(gc, common);
  gc->add_option("--seeds-per-op", seeds_per_op, "random inputs per operation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(common, variant, dataset_dir, synth_file, resume);
    if (eval->parsed()) return cmd_eval(common, ckpt_path, dataset_dir, synth_file);
    if (infer->parsed()) return cmd_infer(common, ckpt_path, rgb_path, depth_path);
    if (synth->parsed()) return cmd_synth_data(common, synth_file);
    if (attn->parsed()) return cmd_attn_stats(common, ckpt_path, dataset_dir, synth_file);
    if (gc->parsed()) return cmd_grad_check(common, seeds_per_op);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::fprintf(stderr, "error: no subcommand selected\n");
  return 1;
}
