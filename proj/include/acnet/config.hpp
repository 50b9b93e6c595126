#pragma once

#include <cstdint>
#include <string>

#include "acnet/data.hpp"
#include "acnet/model.hpp"

namespace acnet {

// Where the normalization constants come from: fixed color constants with
// measured depth (the generated-scene default), everything measured from the
// training split, or values given explicitly in the config.
enum class NormMode { kSynth, kDataset, kManual };

std::string norm_mode_name(NormMode m);
NormMode norm_mode_from_name(const std::string& s);

struct TrainConfig {
  double lr = 0.002;
  double momentum = 0.9;
  double weight_decay = 0.004;
  int batch_size = 4;
  double lr_decay_factor = 0.8;
  int lr_decay_every = 100;  // epochs between decay steps
  int epochs = 300;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 = only the final checkpoint

  void validate() const;
};

// Everything one run needs, addressable through flat `key = value` text.
struct RunConfig {
  TrainConfig train;
  AcnetConfig model = AcnetConfig::desk(6);
  AugmentConfig augment;
  SynthSpec synth;
  NormMode norm_mode = NormMode::kSynth;
  NormStats norm;         // authoritative only when norm_mode == kManual
  std::string data_dir;   // empty: generate scenes from `synth`

  void validate() const;
};

// Applies one key/value pair onto cfg; unknown keys and malformed values
// throw. `model.preset = desk|paper` rewrites the architecture fields in one
// stroke (keeping classes and variant), so later keys can refine it.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

// `key = value` lines over the defaults; '#' starts a comment.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Every field, one line each, in a fixed order, with doubles printed so they
// re-parse to the identical bit pattern. parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// Shortest decimal string that parses back to exactly v. Used wherever a
// logged number must survive a text round trip.
std::string format_double_roundtrip(double v);

}  // namespace acnet
