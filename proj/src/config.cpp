#include "acnet/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace acnet {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: bad value for " + key + ": '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  // strtod instead of stod: stod throws out_of_range on subnormal results,
  // which would break the serialize/parse round trip for tiny magnitudes.
  if (value.empty()) bad_value(key, value);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size()) bad_value(key, value);
  if (errno == ERANGE && std::fabs(v) == HUGE_VAL) bad_value(key, value);  // overflow only
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size() || v < -2147483647l || v > 2147483647l) bad_value(key, value);
    return static_cast<int>(v);
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    if (!value.empty() && value[0] == '-') bad_value(key, value);  // stoull would wrap silently
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string block_kind_name(BlockKind k) {
  return k == BlockKind::kBasic ? "basic" : "bottleneck";
}

BlockKind block_kind_from_name(const std::string& key, const std::string& s) {
  if (s == "basic") return BlockKind::kBasic;
  if (s == "bottleneck") return BlockKind::kBottleneck;
  bad_value(key, s);
}

// "blocks:channels:kind:stride" comma list, one entry per encoder stage.
std::vector<StageSpec> parse_stages(const std::string& key, const std::string& value) {
  std::vector<StageSpec> stages;
  std::stringstream list(value);
  std::string entry;
  while (std::getline(list, entry, ',')) {
    entry = trim(entry);
    std::stringstream fields(entry);
    std::string f[4];
    for (auto& part : f) {
      if (!std::getline(fields, part, ':')) bad_value(key, value);
      part = trim(part);
    }
    std::string extra;
    if (std::getline(fields, extra, ':')) bad_value(key, value);
    StageSpec s;
    s.blocks = parse_int(key, f[0]);
    s.channels = parse_int(key, f[1]);
    s.kind = block_kind_from_name(key, f[2]);
    s.stride = parse_int(key, f[3]);
    stages.push_back(s);
  }
  if (stages.empty()) bad_value(key, value);
  return stages;
}

std::string stages_to_string(const std::vector<StageSpec>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(stages[i].blocks) + ':' + std::to_string(stages[i].channels) + ':' +
           block_kind_name(stages[i].kind) + ':' + std::to_string(stages[i].stride);
  }
  return out;
}

}  // namespace

std::string format_double_roundtrip(double v) {
  // Of all precision-1..17 %g renderings that parse back to exactly v, keep
  // the shortest, preferring plain notation over scientific on ties ("100"
  // beats "1e+02"); more digits can mean fewer characters when %g switches
  // notation, so every precision gets probed.
  std::string best;
  for (int prec = 1; prec <= 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    double back = 0;
    if (std::sscanf(probe, "%lf", &back) != 1 || back != v) continue;
    const std::string s = probe;
    const bool shorter = best.empty() || s.size() < best.size();
    const bool plainer = s.size() == best.size() && s.find('e') == std::string::npos &&
                         best.find('e') != std::string::npos;
    if (shorter || plainer) best = s;
  }
  if (!best.empty()) return best;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::kSynth: return "synth";
    case NormMode::kDataset: return "dataset";
    case NormMode::kManual: return "manual";
  }
  return "synth";
}

NormMode norm_mode_from_name(const std::string& s) {
  if (s == "synth") return NormMode::kSynth;
  if (s == "dataset") return NormMode::kDataset;
  if (s == "manual") return NormMode::kManual;
  throw std::invalid_argument("unknown norm mode: " + s);
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train: momentum must lie in [0, 1)");
  if (weight_decay < 0) throw std::invalid_argument("train: weight decay must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be at least 1");
  if (!(lr_decay_factor > 0) || lr_decay_factor > 1) {
    throw std::invalid_argument("train: lr decay factor must lie in (0, 1]");
  }
  if (lr_decay_every < 1) throw std::invalid_argument("train: lr decay interval must be at least 1");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
  if (checkpoint_every < 0) throw std::invalid_argument("train: checkpoint cadence must be non-negative");
}

void RunConfig::validate() const {
  train.validate();
  model.validate();
  augment.validate();
  synth.validate();
  if (data_dir.empty() && synth.classes != model.classes) {
    throw std::invalid_argument(
        "config: synth.classes and model.classes disagree (" + std::to_string(synth.classes) +
        " vs " + std::to_string(model.classes) + ")");
  }
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "train.lr") cfg.train.lr = parse_double(key, value);
  else if (key == "train.momentum") cfg.train.momentum = parse_double(key, value);
  else if (key == "train.weight_decay") cfg.train.weight_decay = parse_double(key, value);
  else if (key == "train.batch_size") cfg.train.batch_size = parse_int(key, value);
  else if (key == "train.lr_decay_factor") cfg.train.lr_decay_factor = parse_double(key, value);
  else if (key == "train.lr_decay_every") cfg.train.lr_decay_every = parse_int(key, value);
  else if (key == "train.epochs") cfg.train.epochs = parse_int(key, value);
  else if (key == "train.seed") cfg.train.seed = parse_u64(key, value);
  else if (key == "train.checkpoint_every") cfg.train.checkpoint_every = parse_int(key, value);
  else if (key == "model.preset") {
    const int classes = cfg.model.classes;
    const Variant variant = cfg.model.variant;
    if (value == "desk") cfg.model = AcnetConfig::desk(classes);
    else if (value == "paper") cfg.model = AcnetConfig::paper(classes);
    else bad_value(key, value);
    cfg.model.variant = variant;
  }
  else if (key == "model.classes") cfg.model.classes = parse_int(key, value);
  else if (key == "model.stem") cfg.model.stem = parse_int(key, value);
  else if (key == "model.stem_kernel") cfg.model.stem_kernel = parse_int(key, value);
  else if (key == "model.variant") cfg.model.variant = variant_from_name(value);
  else if (key == "model.stages") cfg.model.stages = parse_stages(key, value);
  else if (key == "augment.enabled") cfg.augment.enabled = parse_bool(key, value);
  else if (key == "augment.scale_min") cfg.augment.scale_min = parse_double(key, value);
  else if (key == "augment.scale_max") cfg.augment.scale_max = parse_double(key, value);
  else if (key == "augment.crop_h") cfg.augment.crop_h = parse_int(key, value);
  else if (key == "augment.crop_w") cfg.augment.crop_w = parse_int(key, value);
  else if (key == "augment.hflip_prob") cfg.augment.hflip_prob = parse_double(key, value);
  else if (key == "augment.hue_delta") cfg.augment.hue_delta = parse_double(key, value);
  else if (key == "augment.sat_min") cfg.augment.sat_min = parse_double(key, value);
  else if (key == "augment.sat_max") cfg.augment.sat_max = parse_double(key, value);
  else if (key == "augment.val_min") cfg.augment.val_min = parse_double(key, value);
  else if (key == "augment.val_max") cfg.augment.val_max = parse_double(key, value);
  else if (key == "synth.count") cfg.synth.count = parse_int(key, value);
  else if (key == "synth.size") cfg.synth.size = parse_int(key, value);
  else if (key == "synth.classes") cfg.synth.classes = parse_int(key, value);
  else if (key == "synth.min_shapes") cfg.synth.min_shapes = parse_int(key, value);
  else if (key == "synth.max_shapes") cfg.synth.max_shapes = parse_int(key, value);
  else if (key == "synth.cue_mode") cfg.synth.cue_mode = cue_mode_from_name(value);
  else if (key == "synth.seed") cfg.synth.seed = parse_u64(key, value);
  else if (key == "norm.mode") cfg.norm_mode = norm_mode_from_name(value);
  else if (key == "norm.rgb_mean_r") cfg.norm.rgb_mean[0] = parse_double(key, value);
  else if (key == "norm.rgb_mean_g") cfg.norm.rgb_mean[1] = parse_double(key, value);
  else if (key == "norm.rgb_mean_b") cfg.norm.rgb_mean[2] = parse_double(key, value);
  else if (key == "norm.rgb_std_r") cfg.norm.rgb_std[0] = parse_double(key, value);
  else if (key == "norm.rgb_std_g") cfg.norm.rgb_std[1] = parse_double(key, value);
  else if (key == "norm.rgb_std_b") cfg.norm.rgb_std[2] = parse_double(key, value);
  else if (key == "norm.depth_mean") cfg.norm.depth_mean = parse_double(key, value);
  else if (key == "norm.depth_std") cfg.norm.depth_std = parse_double(key, value);
  else if (key == "data.dir") cfg.data_dir = value;
  else throw std::invalid_argument("config: unknown key: " + key);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not a `key = value` entry: " + line);
    }
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "train.lr = " << format_double_roundtrip(cfg.train.lr) << '\n'
      << "train.momentum = " << format_double_roundtrip(cfg.train.momentum) << '\n'
      << "train.weight_decay = " << format_double_roundtrip(cfg.train.weight_decay) << '\n'
      << "train.batch_size = " << cfg.train.batch_size << '\n'
      << "train.lr_decay_factor = " << format_double_roundtrip(cfg.train.lr_decay_factor) << '\n'
      << "train.lr_decay_every = " << cfg.train.lr_decay_every << '\n'
      << "train.epochs = " << cfg.train.epochs << '\n'
      << "train.seed = " << cfg.train.seed << '\n'
      << "train.checkpoint_every = " << cfg.train.checkpoint_every << '\n'
      << "model.classes = " << cfg.model.classes << '\n'
      << "model.stem = " << cfg.model.stem << '\n'
      << "model.stem_kernel = " << cfg.model.stem_kernel << '\n'
      << "model.variant = " << variant_name(cfg.model.variant) << '\n'
      << "model.stages = " << stages_to_string(cfg.model.stages) << '\n'
      << "augment.enabled = " << (cfg.augment.enabled ? "true" : "false") << '\n'
      << "augment.scale_min = " << format_double_roundtrip(cfg.augment.scale_min) << '\n'
      << "augment.scale_max = " << format_double_roundtrip(cfg.augment.scale_max) << '\n'
      << "augment.crop_h = " << cfg.augment.crop_h << '\n'
      << "augment.crop_w = " << cfg.augment.crop_w << '\n'
      << "augment.hflip_prob = " << format_double_roundtrip(cfg.augment.hflip_prob) << '\n'
      << "augment.hue_delta = " << format_double_roundtrip(cfg.augment.hue_delta) << '\n'
      << "augment.sat_min = " << format_double_roundtrip(cfg.augment.sat_min) << '\n'
      << "augment.sat_max = " << format_double_roundtrip(cfg.augment.sat_max) << '\n'
      << "augment.val_min = " << format_double_roundtrip(cfg.augment.val_min) << '\n'
      << "augment.val_max = " << format_double_roundtrip(cfg.augment.val_max) << '\n'
      << "synth.count = " << cfg.synth.count << '\n'
      << "synth.size = " << cfg.synth.size << '\n'
      << "synth.classes = " << cfg.synth.classes << '\n'
      << "synth.min_shapes = " << cfg.synth.min_shapes << '\n'
      << "synth.max_shapes = " << cfg.synth.max_shapes << '\n'
      << "synth.cue_mode = " << cue_mode_name(cfg.synth.cue_mode) << '\n'
      << "synth.seed = " << cfg.synth.seed << '\n'
      << "norm.mode = " << norm_mode_name(cfg.norm_mode) << '\n'
      << "norm.rgb_mean_r = " << format_double_roundtrip(cfg.norm.rgb_mean[0]) << '\n'
      << "norm.rgb_mean_g = " << format_double_roundtrip(cfg.norm.rgb_mean[1]) << '\n'
      << "norm.rgb_mean_b = " << format_double_roundtrip(cfg.norm.rgb_mean[2]) << '\n'
      << "norm.rgb_std_r = " << format_double_roundtrip(cfg.norm.rgb_std[0]) << '\n'
      << "norm.rgb_std_g = " << format_double_roundtrip(cfg.norm.rgb_std[1]) << '\n'
      << "norm.rgb_std_b = " << format_double_roundtrip(cfg.norm.rgb_std[2]) << '\n'
      << "norm.depth_mean = " << format_double_roundtrip(cfg.norm.depth_mean) << '\n'
      << "norm.depth_std = " << format_double_roundtrip(cfg.norm.depth_std) << '\n'
      << "data.dir = " << cfg.data_dir << '\n';
  return out.str();
}

}  // namespace acnet
