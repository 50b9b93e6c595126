#include "acnet/model.hpp"

#include <cmath>
#include <stdexcept>

namespace acnet {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kModel1: return "model1";
    case Variant::kModel2: return "model2";
  }
  return "full";
}

Variant variant_from_name(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "model1") return Variant::kModel1;
  if (s == "model2") return Variant::kModel2;
  throw std::invalid_argument("unknown variant '" + s + "' (expected full, model1 or model2)");
}

AcnetConfig AcnetConfig::desk(int classes) {
  AcnetConfig c;
  c.classes = classes;
  c.stem = 16;
  c.stem_kernel = 3;
  c.stages = {{1, 16, BlockKind::kBasic, 1},
              {1, 32, BlockKind::kBasic, 2},
              {1, 64, BlockKind::kBasic, 2},
              {1, 128, BlockKind::kBasic, 2}};
  return c;
}

AcnetConfig AcnetConfig::paper(int classes) {
  AcnetConfig c;
  c.classes = classes;
  c.stem = 64;
  c.stem_kernel = 7;
  c.stages = {{3, 256, BlockKind::kBottleneck, 1},
              {4, 512, BlockKind::kBottleneck, 2},
              {6, 1024, BlockKind::kBottleneck, 2},
              {3, 2048, BlockKind::kBottleneck, 2}};
  return c;
}

void AcnetConfig::validate() const {
  if (in_rgb < 1 || in_depth < 1) throw std::invalid_argument("config: input channels must be positive");
  if (classes < 2) throw std::invalid_argument("config: need at least 2 classes");
  if (stem < 1) throw std::invalid_argument("config: stem channels must be positive");
  if (stem_kernel < 1 || stem_kernel % 2 == 0) {
    throw std::invalid_argument("config: stem kernel must be odd and positive");
  }
  if (stages.size() != 4) throw std::invalid_argument("config: expected exactly 4 stages");
  if (stages[0].stride != 1) throw std::invalid_argument("config: first stage must keep resolution");
  for (std::size_t i = 1; i < 4; ++i) {
    if (stages[i].stride != 2) throw std::invalid_argument("config: stages 2-4 must halve resolution");
  }
  for (const auto& s : stages) {
    if (s.blocks < 1 || s.channels < 1) throw std::invalid_argument("config: bad stage spec");
    if (s.kind == BlockKind::kBottleneck && s.channels % 4 != 0) {
      throw std::invalid_argument("config: bottleneck channels must divide by 4");
    }
  }
}

std::vector<int> AcnetConfig::fused_channels() const {
  return {stem, stages[0].channels, stages[1].channels, stages[2].channels, stages[3].channels};
}

std::vector<int> AcnetConfig::decoder_channels() const {
  // Halve from the deepest encoder width, but keep a floor wide enough to
  // carry per-pixel class evidence at the fine scales: on small presets an
  // unfloored cascade ends at 4 channels and the high-resolution outputs
  // stall at the majority class while the coarse outputs fit.
  const int floor_ch = std::max(16, classes);
  const int c4 = stages[3].channels;
  std::vector<int> out;
  for (int div = 2; div <= 32; div *= 2) out.push_back(std::max(c4 / div, floor_ch));
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

// Convolutions feeding a norm layer draw from an attenuated range: the norm
// layer makes the forward pass invariant to their weight scale, while the
// effective step size of momentum SGD on them grows as the weight norm
// shrinks. Small fixed-budget runs at a conservative learning rate only
// converge inside that budget with the attenuated start; scale-sensitive
// layers (heads, skip adapters, gates) keep the full fan-in bound.
constexpr double kNormPairedGain = 0.1;

template <typename T>
Tensor<T> kaiming_conv(Shape s, Rng& rng, double gain = 1.0) {
  // fan_in counts the inputs feeding one output unit: Cin * kh * kw
  const double fan_in = static_cast<double>(s[1]) * s[2] * s[3];
  const double bound = gain * std::sqrt(6.0 / fan_in);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(s)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(s), std::move(v), true);
}

// Transposed kernels store Cin x Cout x kh x kw; fan_in is still Cin*kh*kw.
template <typename T>
Tensor<T> kaiming_tconv(Shape s, Rng& rng, double gain = 1.0) {
  const double fan_in = static_cast<double>(s[0]) * s[2] * s[3];
  const double bound = gain * std::sqrt(6.0 / fan_in);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(s)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(s), std::move(v), true);
}

template <typename T>
BnParams<T> init_bn(int channels) {
  BnParams<T> bn;
  bn.gamma = Tensor<T>::full({channels}, T(1), true);
  bn.beta = Tensor<T>::zeros({channels}, true);
  bn.stats.reset(channels);
  return bn;
}

template <typename T>
BlockParams<T> init_block(BlockKind kind, int in, int out, int stride, Rng& rng) {
  BlockParams<T> blk;
  blk.kind = kind;
  blk.stride = stride;
  if (kind == BlockKind::kBasic) {
    blk.conv1.w = kaiming_conv<T>({out, in, 3, 3}, rng, kNormPairedGain);
    blk.bn1 = init_bn<T>(out);
    blk.conv2.w = kaiming_conv<T>({out, out, 3, 3}, rng, kNormPairedGain);
    blk.bn2 = init_bn<T>(out);
  } else {
    const int mid = out / 4;
    blk.conv1.w = kaiming_conv<T>({mid, in, 1, 1}, rng, kNormPairedGain);
    blk.bn1 = init_bn<T>(mid);
    blk.conv2.w = kaiming_conv<T>({mid, mid, 3, 3}, rng, kNormPairedGain);
    blk.bn2 = init_bn<T>(mid);
    blk.conv3.w = kaiming_conv<T>({out, mid, 1, 1}, rng, kNormPairedGain);
    blk.bn3 = init_bn<T>(out);
  }
  if (stride != 1 || in != out) {
    blk.has_down = true;
    blk.down.w = kaiming_conv<T>({out, in, 1, 1}, rng, kNormPairedGain);
    blk.down_bn = init_bn<T>(out);
  }
  return blk;
}

template <typename T>
StageParams<T> init_stage(const StageSpec& spec, int in, Rng& rng) {
  StageParams<T> st;
  st.blocks.push_back(init_block<T>(spec.kind, in, spec.channels, spec.stride, rng));
  for (int i = 1; i < spec.blocks; ++i) {
    st.blocks.push_back(init_block<T>(spec.kind, spec.channels, spec.channels, 1, rng));
  }
  return st;
}

template <typename T>
BranchParams<T> init_branch(const AcnetConfig& cfg, int in_channels, bool with_stem, Rng& rng) {
  BranchParams<T> br;
  if (with_stem) {
    br.stem.w = kaiming_conv<T>({cfg.stem, in_channels, cfg.stem_kernel, cfg.stem_kernel}, rng,
                                kNormPairedGain);
    br.stem_bn = init_bn<T>(cfg.stem);
  }
  int in = cfg.stem;
  for (int i = 0; i < 4; ++i) {
    br.stages[static_cast<std::size_t>(i)] = init_stage<T>(cfg.stages[static_cast<std::size_t>(i)], in, rng);
    in = cfg.stages[static_cast<std::size_t>(i)].channels;
  }
  return br;
}

template <typename T>
AcmSet<T> init_acm_set(const AcnetConfig& cfg, Rng& rng) {
  AcmSet<T> set;
  set.stem = init_acm<T>(cfg.stem, rng);
  for (int i = 0; i < 4; ++i) {
    set.layer[static_cast<std::size_t>(i)] = init_acm<T>(cfg.stages[static_cast<std::size_t>(i)].channels, rng);
  }
  return set;
}

}  // namespace

template <typename T>
ModelParams<T> init_model(const AcnetConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams<T> m;
  m.cfg = cfg;
  m.rgb = init_branch<T>(cfg, cfg.in_rgb, true, rng);
  m.depth = init_branch<T>(cfg, cfg.in_depth, true, rng);
  if (cfg.variant != Variant::kModel1) m.fuse = init_branch<T>(cfg, 0, false, rng);
  if (cfg.variant == Variant::kFull) {
    m.acm_rgb = init_acm_set<T>(cfg, rng);
    m.acm_depth = init_acm_set<T>(cfg, rng);
  }

  const auto enc = cfg.fused_channels();   // F0..F4 channels
  const auto dec = cfg.decoder_channels();
  int in = enc[4];
  for (int j = 0; j < 5; ++j) {
    auto& st = m.decoder[static_cast<std::size_t>(j)];
    const int enc_ch = enc[static_cast<std::size_t>(4 - j)];
    st.skip.w = kaiming_conv<T>({in, enc_ch, 1, 1}, rng);
    st.skip.b = Tensor<T>::zeros({in}, true);
    st.tconv.w = kaiming_tconv<T>({in, dec[static_cast<std::size_t>(j)], 2, 2}, rng, kNormPairedGain);
    st.bn = init_bn<T>(dec[static_cast<std::size_t>(j)]);
    st.head.w = kaiming_conv<T>({cfg.classes, dec[static_cast<std::size_t>(j)], 1, 1}, rng);
    st.head.b = Tensor<T>::zeros({cfg.classes}, true);
    in = dec[static_cast<std::size_t>(j)];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

template <typename T>
Tensor<T> run_bn(BnParams<T>& bn, const Tensor<T>& x, BnMode mode) {
  return batch_norm2d(x, bn.gamma, bn.beta, bn.stats, mode);
}

template <typename T>
Tensor<T> run_block(BlockParams<T>& blk, const Tensor<T>& x, BnMode mode) {
  Tensor<T> y;
  if (blk.kind == BlockKind::kBasic) {
    y = relu(run_bn(blk.bn1, conv2d(x, blk.conv1.w, Tensor<T>{}, blk.stride, 1), mode));
    y = run_bn(blk.bn2, conv2d(y, blk.conv2.w, Tensor<T>{}, 1, 1), mode);
  } else {
    y = relu(run_bn(blk.bn1, conv2d(x, blk.conv1.w, Tensor<T>{}, 1, 0), mode));
    y = relu(run_bn(blk.bn2, conv2d(y, blk.conv2.w, Tensor<T>{}, blk.stride, 1), mode));
    y = run_bn(blk.bn3, conv2d(y, blk.conv3.w, Tensor<T>{}, 1, 0), mode);
  }
  Tensor<T> shortcut = x;
  if (blk.has_down) {
    shortcut = run_bn(blk.down_bn, conv2d(x, blk.down.w, Tensor<T>{}, blk.stride, 0), mode);
  }
  return relu(add(y, shortcut));
}

template <typename T>
Tensor<T> run_stage(StageParams<T>& st, Tensor<T> x, BnMode mode) {
  for (auto& b : st.blocks) x = run_block(b, x, mode);
  return x;
}

}  // namespace

template <typename T>
ModelOutput<T> model_forward(ModelParams<T>& m, const Tensor<T>& rgb, const Tensor<T>& depth,
                             BnMode mode, ForwardTrace<T>* trace, bool bypass_gates) {
  if (rgb.rank() != 4 || depth.rank() != 4) {
    throw std::invalid_argument("model_forward: inputs must be 4-d");
  }
  if (rgb.dim(1) != m.cfg.in_rgb || depth.dim(1) != m.cfg.in_depth) {
    throw std::invalid_argument("model_forward: channel mismatch with configuration");
  }
  if (rgb.dim(0) != depth.dim(0) || rgb.dim(2) != depth.dim(2) || rgb.dim(3) != depth.dim(3)) {
    throw std::invalid_argument("model_forward: color and depth extents disagree");
  }
  if (rgb.dim(2) % 32 != 0 || rgb.dim(3) % 32 != 0) {
    throw std::invalid_argument("model_forward: spatial extents must divide by 32, got " +
                                shape_str(rgb.shape()));
  }

  const int pad = m.cfg.stem_kernel / 2;
  const bool gates = m.cfg.variant == Variant::kFull && !bypass_gates;

  // stems at half resolution
  auto r = relu(run_bn(m.rgb.stem_bn, conv2d(rgb, m.rgb.stem.w, Tensor<T>{}, 2, pad), mode));
  auto d = relu(run_bn(m.depth.stem_bn, conv2d(depth, m.depth.stem.w, Tensor<T>{}, 2, pad), mode));

  std::array<Tensor<T>, 5> rs, ds, fs;
  std::array<Tensor<T>, 5> vr, vd;
  rs[0] = r;
  ds[0] = d;

  if (gates) {
    auto gr = acm_forward(r, m.acm_rgb.stem);
    auto gd = acm_forward(d, m.acm_depth.stem);
    vr[0] = gr.weights;
    vd[0] = gd.weights;
    fs[0] = add(gr.gated, gd.gated);
  } else {
    fs[0] = add(r, d);
  }

  auto rx = max_pool_3x3s2(r);
  auto dx = max_pool_3x3s2(d);
  for (int i = 0; i < 4; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    rx = run_stage(m.rgb.stages[ui], rx, mode);
    dx = run_stage(m.depth.stages[ui], dx, mode);
    rs[ui + 1] = rx;
    ds[ui + 1] = dx;

    if (m.cfg.variant == Variant::kModel1) {
      fs[ui + 1] = add(rx, dx);
    } else {
      auto carried = i == 0 ? max_pool_3x3s2(fs[0]) : fs[ui];
      auto fused = run_stage(m.fuse.stages[ui], carried, mode);
      if (gates) {
        auto gr = acm_forward(rx, m.acm_rgb.layer[ui]);
        auto gd = acm_forward(dx, m.acm_depth.layer[ui]);
        vr[ui + 1] = gr.weights;
        vd[ui + 1] = gd.weights;
        fs[ui + 1] = add(add(fused, gr.gated), gd.gated);
      } else {
        fs[ui + 1] = add(add(fused, rx), dx);
      }
    }
  }

  ModelOutput<T> out;
  Tensor<T> y;
  for (int j = 0; j < 5; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    auto& st = m.decoder[uj];
    auto adapted = conv2d(fs[static_cast<std::size_t>(4 - j)], st.skip.w, st.skip.b, 1, 0);
    auto in = j == 0 ? adapted : add(y, adapted);
    y = relu(run_bn(st.bn, conv_transpose2d(in, st.tconv.w, Tensor<T>{}, 2, 0), mode));
    out.heads[uj] = conv2d(y, st.head.w, st.head.b, 1, 0);
  }

  if (trace) {
    trace->rgb = rs;
    trace->depth = ds;
    trace->fused = fs;
    trace->acm_rgb_v = vr;
    trace->acm_depth_v = vd;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter traversal

namespace {

template <typename T>
using ParamFn = std::function<void(const std::string&, Tensor<T>&, bool)>;
template <typename T>
using BnFn = std::function<void(const std::string&, BnParams<T>&)>;

template <typename T>
void visit_bn_params(const std::string& name, BnParams<T>& bn, const ParamFn<T>& fn) {
  fn(name + ".g", bn.gamma, false);
  fn(name + ".b", bn.beta, false);
}

template <typename T>
void visit_block(const std::string& prefix, BlockParams<T>& blk, const ParamFn<T>* fn,
                 const BnFn<T>* bnfn) {
  auto conv = [&](const std::string& n, Tensor<T>& w) {
    if (fn) (*fn)(n + ".w", w, true);
  };
  auto bn = [&](const std::string& n, BnParams<T>& b) {
    if (fn) visit_bn_params(n, b, *fn);
    if (bnfn) (*bnfn)(n, b);
  };
  conv(prefix + ".conv1", blk.conv1.w);
  bn(prefix + ".bn1", blk.bn1);
  conv(prefix + ".conv2", blk.conv2.w);
  bn(prefix + ".bn2", blk.bn2);
  if (blk.kind == BlockKind::kBottleneck) {
    conv(prefix + ".conv3", blk.conv3.w);
    bn(prefix + ".bn3", blk.bn3);
  }
  if (blk.has_down) {
    conv(prefix + ".down.conv", blk.down.w);
    bn(prefix + ".down.bn", blk.down_bn);
  }
}

template <typename T>
void visit_branch(const std::string& prefix, BranchParams<T>& br, bool with_stem,
                  const ParamFn<T>* fn, const BnFn<T>* bnfn) {
  if (with_stem) {
    if (fn) (*fn)(prefix + ".stem.conv.w", br.stem.w, true);
    if (fn) visit_bn_params(prefix + ".stem.bn", br.stem_bn, *fn);
    if (bnfn) (*bnfn)(prefix + ".stem.bn", br.stem_bn);
  }
  for (int i = 0; i < 4; ++i) {
    auto& st = br.stages[static_cast<std::size_t>(i)];
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      visit_block(prefix + ".l" + std::to_string(i + 1) + ".b" + std::to_string(b),
                  st.blocks[b], fn, bnfn);
    }
  }
}

template <typename T>
void visit_acm_set(const std::string& prefix, AcmSet<T>& set, const ParamFn<T>& fn) {
  fn(prefix + ".stem.w", set.stem.w, true);
  fn(prefix + ".stem.b", set.stem.b, false);
  for (int i = 0; i < 4; ++i) {
    auto& p = set.layer[static_cast<std::size_t>(i)];
    fn(prefix + ".l" + std::to_string(i + 1) + ".w", p.w, true);
    fn(prefix + ".l" + std::to_string(i + 1) + ".b", p.b, false);
  }
}

template <typename T>
void visit_all(ModelParams<T>& m, const ParamFn<T>* fn, const BnFn<T>* bnfn) {
  visit_branch<T>("rgb", m.rgb, true, fn, bnfn);
  visit_branch<T>("depth", m.depth, true, fn, bnfn);
  if (m.cfg.variant != Variant::kModel1) visit_branch<T>("fuse", m.fuse, false, fn, bnfn);
  if (m.cfg.variant == Variant::kFull && fn) {
    visit_acm_set<T>("acm.rgb", m.acm_rgb, *fn);
    visit_acm_set<T>("acm.depth", m.acm_depth, *fn);
  }
  for (int j = 0; j < 5; ++j) {
    auto& st = m.decoder[static_cast<std::size_t>(j)];
    const std::string p = "dec.s" + std::to_string(j + 1);
    if (fn) {
      (*fn)(p + ".skip.w", st.skip.w, true);
      (*fn)(p + ".skip.b", st.skip.b, false);
      (*fn)(p + ".tconv.w", st.tconv.w, true);
      visit_bn_params(p + ".bn", st.bn, *fn);
      (*fn)(p + ".head.w", st.head.w, true);
      (*fn)(p + ".head.b", st.head.b, false);
    }
    if (bnfn) (*bnfn)(p + ".bn", st.bn);
  }
}

}  // namespace

template <typename T>
void for_each_param(ModelParams<T>& m,
                    const std::function<void(const std::string&, Tensor<T>&, bool)>& fn) {
  visit_all<T>(m, &fn, nullptr);
}

template <typename T>
void for_each_bn(ModelParams<T>& m,
                 const std::function<void(const std::string&, BnParams<T>&)>& fn) {
  visit_all<T>(m, nullptr, &fn);
}

template <typename T>
std::int64_t param_count(ModelParams<T>& m) {
  std::int64_t total = 0;
  for_each_param<T>(m, [&](const std::string&, Tensor<T>& t, bool) { total += t.numel(); });
  return total;
}

// ---------------------------------------------------------------------------
// Closed-form parameter counts

namespace {

std::int64_t conv_params(int out, int in, int k) { return static_cast<std::int64_t>(out) * in * k * k; }
std::int64_t bn_params(int c) { return 2LL * c; }

std::int64_t block_params(BlockKind kind, int in, int out, int stride) {
  std::int64_t n = 0;
  if (kind == BlockKind::kBasic) {
    n += conv_params(out, in, 3) + bn_params(out);
    n += conv_params(out, out, 3) + bn_params(out);
  } else {
    const int mid = out / 4;
    n += conv_params(mid, in, 1) + bn_params(mid);
    n += conv_params(mid, mid, 3) + bn_params(mid);
    n += conv_params(out, mid, 1) + bn_params(out);
  }
  if (stride != 1 || in != out) n += conv_params(out, in, 1) + bn_params(out);
  return n;
}

std::int64_t branch_params(const AcnetConfig& cfg, int in_channels, bool with_stem) {
  std::int64_t n = 0;
  if (with_stem) n += conv_params(cfg.stem, in_channels, cfg.stem_kernel) + bn_params(cfg.stem);
  int in = cfg.stem;
  for (const auto& s : cfg.stages) {
    n += block_params(s.kind, in, s.channels, s.stride);
    for (int b = 1; b < s.blocks; ++b) n += block_params(s.kind, s.channels, s.channels, 1);
    in = s.channels;
  }
  return n;
}

}  // namespace

std::int64_t gate_param_count(const AcnetConfig& cfg) {
  std::int64_t n = 0;
  for (const int c : cfg.fused_channels()) n += static_cast<std::int64_t>(c) * c + c;
  return 2 * n;  // one set per input branch
}

std::int64_t expected_param_count(const AcnetConfig& cfg) {
  std::int64_t n = branch_params(cfg, cfg.in_rgb, true) + branch_params(cfg, cfg.in_depth, true);
  if (cfg.variant != Variant::kModel1) n += branch_params(cfg, 0, false);
  if (cfg.variant == Variant::kFull) n += gate_param_count(cfg);

  const auto enc = cfg.fused_channels();
  const auto dec = cfg.decoder_channels();
  int in = enc[4];
  for (int j = 0; j < 5; ++j) {
    const int enc_ch = enc[static_cast<std::size_t>(4 - j)];
    const int out = dec[static_cast<std::size_t>(j)];
    n += conv_params(in, enc_ch, 1) + in;             // skip adapter + bias
    n += static_cast<std::int64_t>(in) * out * 2 * 2; // upsampler
    n += bn_params(out);
    n += conv_params(cfg.classes, out, 1) + cfg.classes;  // head + bias
    in = out;
  }
  return n;
}

// ---------------------------------------------------------------------------

#define ACNET_INSTANTIATE_MODEL(T)                                                          \
  template ModelParams<T> init_model(const AcnetConfig&, Rng&);                             \
  template ModelOutput<T> model_forward(ModelParams<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        BnMode, ForwardTrace<T>*, bool);                    \
  template void for_each_param(ModelParams<T>&,                                             \
                               const std::function<void(const std::string&, Tensor<T>&, bool)>&); \
  template void for_each_bn(ModelParams<T>&,                                                \
                            const std::function<void(const std::string&, BnParams<T>&)>&);  \
  template std::int64_t param_count(ModelParams<T>&);

ACNET_INSTANTIATE_MODEL(float)
ACNET_INSTANTIATE_MODEL(double)

#undef ACNET_INSTANTIATE_MODEL

}  // namespace acnet
