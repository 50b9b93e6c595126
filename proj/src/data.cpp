#include "acnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "acnet/image.hpp"

namespace fs = std::filesystem;

namespace acnet {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bounded integer draw that always consumes exactly one rng draw, so
// augmentation streams advance by a fixed amount per sample.
int bounded_draw(Rng& rng, int n) {
  const int v = static_cast<int>(rng.uniform() * n);
  return std::min(v, n - 1);
}

struct ShapeSpec {
  int kind = 0;  // 0 rect, 1 disc, 2 triangle
  int cls = 2;
  std::array<double, 3> color{};
  double depth = 0.5;
  // rect: (cy, cx, half_h, half_w); disc: (cy, cx, radius); triangle: vertices
  std::array<int, 6> geo{};
};

bool inside_triangle(int y, int x, const std::array<int, 6>& v) {
  // Same-side test against all three edges; boundary counts as inside.
  const auto edge = [](long ax, long ay, long bx, long by, long px, long py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  };
  const long d1 = edge(v[1], v[0], v[3], v[2], x, y);
  const long d2 = edge(v[3], v[2], v[5], v[4], x, y);
  const long d3 = edge(v[5], v[4], v[1], v[0], x, y);
  const bool any_neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool any_pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(any_neg && any_pos);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double maxc = std::max({r, g, b});
  const double minc = std::min({r, g, b});
  v = maxc;
  const double d = maxc - minc;
  s = maxc <= 0.0 ? 0.0 : d / maxc;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  double hh;
  if (maxc == r) {
    hh = (g - b) / d;
    if (hh < 0.0) hh += 6.0;
  } else if (maxc == g) {
    hh = (b - r) / d + 2.0;
  } else {
    hh = (r - g) / d + 4.0;
  }
  h = hh / 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  if (s <= 0.0) {
    r = g = b = v;
    return;
  }
  double hh = (h - std::floor(h)) * 6.0;
  if (hh >= 6.0) hh = 0.0;
  const int i = static_cast<int>(hh);
  const double f = hh - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

// Each shape class owns one saturated hue, evenly spaced around the circle, so
// a scene's labels are recoverable from color alone (color_only stays solvable
// and a small model can actually fit the data). Backgrounds use desaturated
// colors, keeping them apart from every class hue.
std::array<double, 3> class_color(int cls, int classes) {
  const double span = std::max(1, classes - 2);
  std::array<double, 3> rgb{};
  hsv_to_rgb((cls - 2) / span, 0.75, 0.85, rgb[0], rgb[1], rgb[2]);
  return rgb;
}

// Each shape class also owns one depth band strictly nearer than any
// background pixel (backgrounds start at 1.5), so depth_only scenes keep the
// class identity legible in the depth channel.
double class_depth(int cls, int classes, Rng& rng) {
  const double span = std::max(1, classes - 3);
  const double base = 0.3 + 0.8 * (cls - 2) / span;
  return base + rng.uniform(-0.04, 0.04);
}

int scaled_extent(int src, double scale) {
  return std::max(1, static_cast<int>(std::lround(src * scale)));
}

// Bilinear fetch with half-pixel centers; clamps at the border. The mapping
// uses the true src/dst ratio, so equal extents reduce to the identity.
double bilerp(const double* plane, int h, int w, int dy, int dx, int dh, int dw) {
  const double cy = (dy + 0.5) * (static_cast<double>(h) / dh) - 0.5;
  const double cx = (dx + 0.5) * (static_cast<double>(w) / dw) - 0.5;
  const int y0 = std::clamp(static_cast<int>(std::floor(cy)), 0, h - 1);
  const int x0 = std::clamp(static_cast<int>(std::floor(cx)), 0, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = std::clamp(cy - y0, 0.0, 1.0);
  const double fx = std::clamp(cx - x0, 0.0, 1.0);
  const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
  const double bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
  return top * (1.0 - fy) + bot * fy;
}

int nearest_src(int dst, int src_extent, int dst_extent) {
  const int v = static_cast<int>((dst + 0.5) * (static_cast<double>(src_extent) / dst_extent));
  return std::clamp(v, 0, src_extent - 1);
}

std::string stem_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return buf;
}

std::vector<std::string> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("dataset directory missing: " + dir.string());
  }
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

}  // namespace

std::string cue_mode_name(CueMode m) {
  switch (m) {
    case CueMode::kBoth: return "both";
    case CueMode::kColorOnly: return "color_only";
    case CueMode::kDepthOnly: return "depth_only";
  }
  return "both";
}

CueMode cue_mode_from_name(const std::string& s) {
  if (s == "both") return CueMode::kBoth;
  if (s == "color_only") return CueMode::kColorOnly;
  if (s == "depth_only") return CueMode::kDepthOnly;
  throw std::invalid_argument("unknown cue mode: " + s);
}

void SynthSpec::validate() const {
  if (count < 1) throw std::invalid_argument("synth: count must be at least 1");
  if (size < 32 || size % 32 != 0) {
    throw std::invalid_argument("synth: size must be a positive multiple of 32");
  }
  if (classes < 3) {
    throw std::invalid_argument(
        "synth: at least 3 classes needed (ignore, background, one shape class)");
  }
  if (classes > 255) throw std::invalid_argument("synth: class ids must fit in 8 bits");
  if (min_shapes < 1 || max_shapes < min_shapes) {
    throw std::invalid_argument("synth: shape count range is empty");
  }
}

std::vector<Sample> synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  const int sz = spec.size;

  for (int img = 0; img < spec.count; ++img) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(img)));
    Sample s(sz, sz);

    // Background: one flat low-saturation color, class 1, depth ramping away
    // down the rows. Low saturation keeps it distinct from every class hue.
    std::array<double, 3> bg_color{};
    hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.15), rng.uniform(0.3, 0.7), bg_color[0],
               bg_color[1], bg_color[2]);
    const double near = 1.5 + rng.uniform();
    const double far = near + 2.0 + rng.uniform();
    for (int y = 0; y < sz; ++y) {
      const double ramp = near + (far - near) * (static_cast<double>(y) / (sz - 1));
      for (int x = 0; x < sz; ++x) {
        for (int c = 0; c < 3; ++c) s.rgb_at(c, y, x) = bg_color[static_cast<std::size_t>(c)];
        s.depth_at(y, x) = ramp;
        s.label_at(y, x) = 1;
      }
    }

    // Shapes are drawn fully (geometry, class, color, depth) before painting,
    // and every cue mode consumes the identical draw sequence, so geometry and
    // labels agree across modes for one seed.
    const int n_shapes = spec.min_shapes + bounded_draw(rng, spec.max_shapes - spec.min_shapes + 1);
    for (int k = 0; k < n_shapes; ++k) {
      ShapeSpec sh;
      sh.kind = bounded_draw(rng, 3);
      sh.cls = 2 + bounded_draw(rng, spec.classes - 2);
      sh.color = class_color(sh.cls, spec.classes);
      sh.depth = class_depth(sh.cls, spec.classes, rng);
      const int lo = sz / 8, hi = sz / 4;
      if (sh.kind == 0) {
        sh.geo = {bounded_draw(rng, sz), bounded_draw(rng, sz),
                  lo + bounded_draw(rng, hi - lo + 1), lo + bounded_draw(rng, hi - lo + 1), 0, 0};
      } else if (sh.kind == 1) {
        sh.geo = {bounded_draw(rng, sz), bounded_draw(rng, sz),
                  lo + bounded_draw(rng, hi - lo + 1), 0, 0, 0};
      } else {
        // Near-equilateral triangle from a center, radius, and rotation: random
        // vertex triples degenerate into slivers too thin to segment at 64 px.
        const int cy = bounded_draw(rng, sz), cx = bounded_draw(rng, sz);
        const int r = lo + bounded_draw(rng, hi - lo + 1);
        const double rot = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int i = 0; i < 3; ++i) {
          const double a = rot + i * (2.0 * std::numbers::pi / 3.0);
          sh.geo[static_cast<std::size_t>(2 * i)] = cy + static_cast<int>(std::lround(r * std::sin(a)));
          sh.geo[static_cast<std::size_t>(2 * i + 1)] = cx + static_cast<int>(std::lround(r * std::cos(a)));
        }
      }

      for (int y = 0; y < sz; ++y) {
        for (int x = 0; x < sz; ++x) {
          bool in = false;
          if (sh.kind == 0) {
            in = std::abs(y - sh.geo[0]) <= sh.geo[2] && std::abs(x - sh.geo[1]) <= sh.geo[3];
          } else if (sh.kind == 1) {
            const long dy = y - sh.geo[0], dx = x - sh.geo[1];
            in = dy * dy + dx * dx <= static_cast<long>(sh.geo[2]) * sh.geo[2];
          } else {
            in = inside_triangle(y, x, sh.geo);
          }
          if (!in) continue;
          s.label_at(y, x) = sh.cls;
          s.depth_at(y, x) = sh.depth;
          for (int c = 0; c < 3; ++c) {
            s.rgb_at(c, y, x) =
                clamp01(sh.color[static_cast<std::size_t>(c)] + 0.02 * rng.normal());
          }
        }
      }
    }

    if (spec.cue_mode == CueMode::kColorOnly) {
      // Depth carries no shape imprint: restore the bare ramp.
      for (int y = 0; y < sz; ++y) {
        const double ramp = near + (far - near) * (static_cast<double>(y) / (sz - 1));
        for (int x = 0; x < sz; ++x) s.depth_at(y, x) = ramp;
      }
    } else if (spec.cue_mode == CueMode::kDepthOnly) {
      // Color carries no shape imprint: noisy uniform gray everywhere.
      for (int y = 0; y < sz; ++y) {
        for (int x = 0; x < sz; ++x) {
          for (int c = 0; c < 3; ++c) s.rgb_at(c, y, x) = clamp01(0.5 + 0.02 * rng.normal());
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::string& root, const std::vector<Sample>& samples) {
  const fs::path base(root);
  fs::create_directories(base / "rgb");
  fs::create_directories(base / "depth");
  fs::create_directories(base / "label");

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const std::string stem = stem_name(i);

    RgbImage rgb(s.h, s.w);
    Gray16Image depth(s.h, s.w);
    Gray8Image label(s.h, s.w);
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        for (int c = 0; c < 3; ++c) {
          rgb.at(y, x, c) = static_cast<std::uint8_t>(
              std::clamp(std::lround(s.rgb_at(c, y, x) * 255.0), 0l, 255l));
        }
        depth.at(y, x) = static_cast<std::uint16_t>(
            std::clamp(std::lround(s.depth_at(y, x) * 1000.0), 0l, 65535l));
        const std::int32_t id = s.label_at(y, x);
        if (id < 0 || id > 255) {
          throw std::runtime_error("save_dataset: class id " + std::to_string(id) +
                                   " does not fit the 8-bit label format");
        }
        label.at(y, x) = static_cast<std::uint8_t>(id);
      }
    }
    write_rgb_png((base / "rgb" / (stem + ".png")).string(), rgb);
    write_gray16_png((base / "depth" / (stem + ".png")).string(), depth);
    write_gray8_png((base / "label" / (stem + ".png")).string(), label);
  }
}

std::vector<Sample> load_dataset(const std::string& root) {
  const fs::path base(root);
  const auto rgb_stems = png_stems(base / "rgb");
  const auto depth_stems = png_stems(base / "depth");
  const auto label_stems = png_stems(base / "label");

  const std::set<std::string> all(rgb_stems.begin(), rgb_stems.end());
  std::set<std::string> every = all;
  every.insert(depth_stems.begin(), depth_stems.end());
  every.insert(label_stems.begin(), label_stems.end());

  const auto has = [](const std::vector<std::string>& v, const std::string& s) {
    return std::binary_search(v.begin(), v.end(), s);
  };
  std::vector<std::string> incomplete;
  for (const auto& stem : every) {
    if (!has(rgb_stems, stem) || !has(depth_stems, stem) || !has(label_stems, stem)) {
      incomplete.push_back(stem);
    }
  }
  if (!incomplete.empty()) {
    std::ostringstream msg;
    msg << "load_dataset: incomplete rgb/depth/label triples for stems:";
    for (const auto& s : incomplete) msg << ' ' << s;
    throw std::runtime_error(msg.str());
  }
  if (rgb_stems.empty()) throw std::runtime_error("load_dataset: no samples found in " + root);

  std::vector<Sample> out;
  out.reserve(rgb_stems.size());
  for (const auto& stem : rgb_stems) {
    const RgbImage rgb = read_rgb_png((base / "rgb" / (stem + ".png")).string());
    const Gray16Image depth = read_gray16_png((base / "depth" / (stem + ".png")).string());
    const Gray8Image label = read_gray8_png((base / "label" / (stem + ".png")).string());
    if (depth.h != rgb.h || depth.w != rgb.w || label.h != rgb.h || label.w != rgb.w) {
      throw std::runtime_error("load_dataset: rasters for stem " + stem + " disagree on size");
    }
    Sample s(rgb.h, rgb.w);
    for (int y = 0; y < rgb.h; ++y) {
      for (int x = 0; x < rgb.w; ++x) {
        for (int c = 0; c < 3; ++c) s.rgb_at(c, y, x) = rgb.at(y, x, c) / 255.0;
        s.depth_at(y, x) = depth.at(y, x) / 1000.0;  // millimeters to meters
        s.label_at(y, x) = label.at(y, x);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

NormStats compute_norm_stats(const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("compute_norm_stats: empty dataset");
  std::array<double, 3> rsum{}, rsq{};
  double dsum = 0, dsq = 0;
  double count = 0;
  for (const Sample& s : samples) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double v = s.rgb_at(c, y, x);
          rsum[static_cast<std::size_t>(c)] += v;
          rsq[static_cast<std::size_t>(c)] += v * v;
        }
        const double d = s.depth_at(y, x);
        dsum += d;
        dsq += d * d;
      }
    }
    count += static_cast<double>(s.h) * s.w;
  }
  const auto finish = [count](double sum, double sq) {
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    double sd = std::sqrt(var);
    if (sd < 1e-12) sd = 1.0;  // a perfectly flat channel maps to zero, not to inf
    return std::pair<double, double>(mean, sd);
  };
  NormStats ns;
  for (int c = 0; c < 3; ++c) {
    const auto [m, sd] =
        finish(rsum[static_cast<std::size_t>(c)], rsq[static_cast<std::size_t>(c)]);
    ns.rgb_mean[static_cast<std::size_t>(c)] = m;
    ns.rgb_std[static_cast<std::size_t>(c)] = sd;
  }
  const auto [dm, dsd] = finish(dsum, dsq);
  ns.depth_mean = dm;
  ns.depth_std = dsd;
  return ns;
}

NormStats synth_norm_stats(const std::vector<Sample>& samples) {
  const NormStats measured = compute_norm_stats(samples);
  NormStats ns;  // keeps the fixed 0.5 / 0.25 color constants
  ns.depth_mean = measured.depth_mean;
  ns.depth_std = measured.depth_std;
  return ns;
}

void AugmentConfig::validate() const {
  if (!(scale_min > 0) || !(scale_max >= scale_min)) {
    throw std::invalid_argument("augment: scale range must be positive and ordered");
  }
  if (crop_h < 32 || crop_h % 32 != 0 || crop_w < 32 || crop_w % 32 != 0) {
    throw std::invalid_argument("augment: crop extents must be positive multiples of 32");
  }
  if (hflip_prob < 0 || hflip_prob > 1) throw std::invalid_argument("augment: bad flip probability");
  if (!(sat_min > 0) || sat_max < sat_min || !(val_min > 0) || val_max < val_min) {
    throw std::invalid_argument("augment: saturation/value ranges must be positive and ordered");
  }
}

AugmentDraw draw_augment(const AugmentConfig& cfg, int src_h, int src_w, Rng& rng) {
  cfg.validate();
  AugmentDraw d;
  d.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  const int sh = scaled_extent(src_h, d.scale);
  const int sw = scaled_extent(src_w, d.scale);
  const double uy = rng.uniform();
  const double ux = rng.uniform();
  d.crop_y = sh > cfg.crop_h ? std::min(sh - cfg.crop_h, static_cast<int>(uy * (sh - cfg.crop_h + 1))) : 0;
  d.crop_x = sw > cfg.crop_w ? std::min(sw - cfg.crop_w, static_cast<int>(ux * (sw - cfg.crop_w + 1))) : 0;
  d.flip = rng.uniform() < cfg.hflip_prob;
  d.hue_shift = rng.uniform(-cfg.hue_delta, cfg.hue_delta);
  d.sat_factor = rng.uniform(cfg.sat_min, cfg.sat_max);
  d.val_factor = rng.uniform(cfg.val_min, cfg.val_max);
  return d;
}

Sample apply_augment(const Sample& s, const AugmentConfig& cfg, const AugmentDraw& d) {
  cfg.validate();
  if (s.h <= 0 || s.w <= 0) throw std::invalid_argument("apply_augment: empty sample");
  const int sh = scaled_extent(s.h, d.scale);
  const int sw = scaled_extent(s.w, d.scale);

  // Resample; skipped outright for the identity so values pass through
  // bit-exactly. Depth is divided by the drawn scale: zooming in moves the
  // camera closer, so distances shrink accordingly.
  Sample scaled;
  const bool identity_resize = sh == s.h && sw == s.w && d.scale == 1.0;
  if (identity_resize) {
    scaled = s;
  } else {
    scaled = Sample(sh, sw);
    for (int y = 0; y < sh; ++y) {
      for (int x = 0; x < sw; ++x) {
        for (int c = 0; c < 3; ++c) {
          scaled.rgb_at(c, y, x) =
              bilerp(s.rgb.data() + static_cast<std::size_t>(c) * s.h * s.w, s.h, s.w, y, x, sh, sw);
        }
        scaled.depth_at(y, x) = bilerp(s.depth.data(), s.h, s.w, y, x, sh, sw) / d.scale;
        scaled.label_at(y, x) = s.label_at(nearest_src(y, s.h, sh), nearest_src(x, s.w, sw));
      }
    }
  }

  // Crop to the target window, padding bottom/right when the scaled scene is
  // smaller: labels pad with ignore, color/depth replicate the border pixel.
  Sample out(cfg.crop_h, cfg.crop_w);
  const bool identity_crop =
      cfg.crop_h == sh && cfg.crop_w == sw && d.crop_y == 0 && d.crop_x == 0;
  if (identity_crop) {
    out = std::move(scaled);
  } else {
    for (int y = 0; y < cfg.crop_h; ++y) {
      const int sy = y + d.crop_y;
      for (int x = 0; x < cfg.crop_w; ++x) {
        const int sx = x + d.crop_x;
        const int ey = std::min(sy, sh - 1);
        const int ex = std::min(sx, sw - 1);
        for (int c = 0; c < 3; ++c) out.rgb_at(c, y, x) = scaled.rgb_at(c, ey, ex);
        out.depth_at(y, x) = scaled.depth_at(ey, ex);
        out.label_at(y, x) = (sy < sh && sx < sw) ? scaled.label_at(sy, sx) : 0;
      }
    }
  }

  if (d.flip) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w / 2; ++x) {
        const int mx = out.w - 1 - x;
        for (int c = 0; c < 3; ++c) std::swap(out.rgb_at(c, y, x), out.rgb_at(c, y, mx));
        std::swap(out.depth_at(y, x), out.depth_at(y, mx));
        std::swap(out.label_at(y, x), out.label_at(y, mx));
      }
    }
  }

  // HSV jitter touches color only; the identity draw is a true no-op.
  if (d.hue_shift != 0.0 || d.sat_factor != 1.0 || d.val_factor != 1.0) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        double h, sat, val;
        rgb_to_hsv(out.rgb_at(0, y, x), out.rgb_at(1, y, x), out.rgb_at(2, y, x), h, sat, val);
        h += d.hue_shift;
        h -= std::floor(h);
        sat = clamp01(sat * d.sat_factor);
        val = clamp01(val * d.val_factor);
        double r, g, b;
        hsv_to_rgb(h, sat, val, r, g, b);
        out.rgb_at(0, y, x) = clamp01(r);
        out.rgb_at(1, y, x) = clamp01(g);
        out.rgb_at(2, y, x) = clamp01(b);
      }
    }
  }
  return out;
}

Sample normalize_sample(const Sample& s, const NormStats& stats) {
  Sample out = s;
  const auto plane = static_cast<std::size_t>(s.h) * s.w;
  for (int c = 0; c < 3; ++c) {
    const double m = stats.rgb_mean[static_cast<std::size_t>(c)];
    const double sd = stats.rgb_std[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < plane; ++i) {
      out.rgb[static_cast<std::size_t>(c) * plane + i] =
          (s.rgb[static_cast<std::size_t>(c) * plane + i] - m) / sd;
    }
  }
  for (std::size_t i = 0; i < plane; ++i) {
    out.depth[i] = (s.depth[i] - stats.depth_mean) / stats.depth_std;
  }
  return out;
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
  const Sample& first = samples.at(static_cast<std::size_t>(indices[0]));
  const int h = first.h, w = first.w;
  const int n = static_cast<int>(indices.size());
  const auto plane = static_cast<std::size_t>(h) * w;

  std::vector<double> rgb(static_cast<std::size_t>(n) * 3 * plane);
  std::vector<double> depth(static_cast<std::size_t>(n) * plane);
  IntRaster labels(n, h, w);
  for (int i = 0; i < n; ++i) {
    const Sample& s = samples.at(static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]));
    if (s.h != h || s.w != w) {
      throw std::invalid_argument("make_batch: samples disagree on size");
    }
    std::copy(s.rgb.begin(), s.rgb.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i * 3 * plane));
    std::copy(s.depth.begin(), s.depth.end(), depth.begin() + static_cast<std::ptrdiff_t>(i * plane));
    std::copy(s.label.begin(), s.label.end(), labels.data.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  Batch b;
  b.rgb = TensorD::from_data({n, 3, h, w}, std::move(rgb));
  b.depth = TensorD::from_data({n, 1, h, w}, std::move(depth));
  b.labels = std::move(labels);
  return b;
}

}  // namespace acnet
