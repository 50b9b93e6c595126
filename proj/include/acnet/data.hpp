#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "acnet/raster.hpp"
#include "acnet/rng.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

// One scene: color in [0,1], depth in meters, integer class ids with 0
// reserved for unlabeled pixels. All rasters share h x w; color and depth are
// stored plane-major so batches can be assembled with straight copies.
struct Sample {
  int h = 0, w = 0;
  std::vector<double> rgb;           // 3 planes of h*w
  std::vector<double> depth;         // h*w
  std::vector<std::int32_t> label;   // h*w

  Sample() = default;
  Sample(int height, int width)
      : h(height),
        w(width),
        rgb(static_cast<std::size_t>(height) * width * 3, 0.0),
        depth(static_cast<std::size_t>(height) * width, 0.0),
        label(static_cast<std::size_t>(height) * width, 0) {}

  double& rgb_at(int c, int y, int x) {
    return rgb[(static_cast<std::size_t>(c) * h + y) * w + static_cast<std::size_t>(x)];
  }
  double rgb_at(int c, int y, int x) const {
    return rgb[(static_cast<std::size_t>(c) * h + y) * w + static_cast<std::size_t>(x)];
  }
  double& depth_at(int y, int x) { return depth[static_cast<std::size_t>(y) * w + x]; }
  double depth_at(int y, int x) const { return depth[static_cast<std::size_t>(y) * w + x]; }
  std::int32_t& label_at(int y, int x) { return label[static_cast<std::size_t>(y) * w + x]; }
  std::int32_t label_at(int y, int x) const { return label[static_cast<std::size_t>(y) * w + x]; }
};

// Which input modality carries the shape information in generated scenes.
// kColorOnly leaves depth as the bare background ramp; kDepthOnly flattens
// color to a noisy uniform gray.
enum class CueMode { kBoth, kColorOnly, kDepthOnly };

std::string cue_mode_name(CueMode m);
CueMode cue_mode_from_name(const std::string& s);

struct SynthSpec {
  int count = 8;
  int size = 64;        // square scenes
  int classes = 6;      // class ids run 0 (ignore), 1 (background), 2..classes-1 (shapes)
  int min_shapes = 2;
  int max_shapes = 4;
  CueMode cue_mode = CueMode::kBoth;
  std::uint64_t seed = 1;

  void validate() const;  // classes >= 3, size divisible by 32, sane counts
};

// Flat-colored shapes over a background depth ramp; later shapes paint over
// earlier ones. Scene i depends only on (seed, i), so generation order or
// parallel generation cannot change the result.
std::vector<Sample> synth_generate(const SynthSpec& spec);

// On-disk layout: root/rgb/<stem>.png (8-bit RGB), root/depth/<stem>.png
// (16-bit gray, millimeters), root/label/<stem>.png (8-bit gray class ids).
void save_dataset(const std::string& root, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::string& root);

// Per-modality standardization constants.
struct NormStats {
  std::array<double, 3> rgb_mean = {0.5, 0.5, 0.5};
  std::array<double, 3> rgb_std = {0.25, 0.25, 0.25};
  double depth_mean = 2.5;
  double depth_std = 1.0;
};

// Population mean/std over every pixel of every sample.
NormStats compute_norm_stats(const std::vector<Sample>& samples);
// Generated scenes keep the fixed color constants and measure only depth.
NormStats synth_norm_stats(const std::vector<Sample>& samples);

struct AugmentConfig {
  bool enabled = true;
  double scale_min = 0.8;
  double scale_max = 1.4;
  int crop_h = 64;
  int crop_w = 64;
  double hflip_prob = 0.5;
  double hue_delta = 0.05;  // fraction of the hue circle, drawn in +-delta
  double sat_min = 0.8;
  double sat_max = 1.2;
  double val_min = 0.8;
  double val_max = 1.2;

  void validate() const;  // positive scales, crop divisible by 32
};

// One realized set of augmentation decisions. Drawing is separated from
// applying so a draw can be logged or replayed exactly.
struct AugmentDraw {
  double scale = 1.0;
  int crop_y = 0;
  int crop_x = 0;
  bool flip = false;
  double hue_shift = 0.0;
  double sat_factor = 1.0;
  double val_factor = 1.0;
};

// Consumes a fixed number of rng draws in a fixed order (scale, crop row,
// crop column, flip, hue, saturation, value) regardless of the outcome.
AugmentDraw draw_augment(const AugmentConfig& cfg, int src_h, int src_w, Rng& rng);

// Applies one draw: resample (bilinear for color/depth, nearest for labels),
// divide depth by the spatial scale, crop or pad to the target size (labels
// pad with ignore, color/depth replicate the edge), mirror, then HSV jitter
// on color only. Identity draws pass every raster through bit-exactly.
Sample apply_augment(const Sample& s, const AugmentConfig& cfg, const AugmentDraw& d);

// (x - mean) / std per modality; labels untouched.
Sample normalize_sample(const Sample& s, const NormStats& stats);

// Stacks samples into N x 3 x H x W color, N x 1 x H x W depth, and an
// N x H x W label raster. All samples must share one size.
struct Batch {
  TensorD rgb;
  TensorD depth;
  IntRaster labels;
};
Batch make_batch(const std::vector<Sample>& samples, const std::vector<int>& indices);

}  // namespace acnet
