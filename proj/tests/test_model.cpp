#include "doctest.h"

#include <cmath>
#include <cstring>
#include <set>
#include <unordered_map>
#include <vector>

#include "acnet/model.hpp"
#include "acnet/rng.hpp"

using acnet::AcnetConfig;
using acnet::ModelParams;
using acnet::Shape;
using acnet::Tensor;
using acnet::TensorD;
using acnet::TensorF;
using acnet::Variant;

namespace {

template <typename T>
Tensor<T> rand_input(Shape s, acnet::Rng& r, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(static_cast<std::size_t>(acnet::shape_numel(s)));
  for (auto& x : v) x = static_cast<T>(r.uniform(lo, hi));
  return Tensor<T>::from_data(std::move(s), std::move(v));
}

template <typename T>
void copy_shared_params(ModelParams<T>& src, ModelParams<T>& dst) {
  std::unordered_map<std::string, Tensor<T>> by_name;
  acnet::for_each_param<T>(src, [&](const std::string& n, Tensor<T>& t, bool) {
    by_name.emplace(n, t);
  });
  acnet::for_each_param<T>(dst, [&](const std::string& n, Tensor<T>& t, bool) {
    auto it = by_name.find(n);
    REQUIRE(it != by_name.end());
    REQUIRE(it->second.numel() == t.numel());
    std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
  });
}

}  // namespace

TEST_CASE("config: desk and paper presets validate and expose the right widths") {
  auto desk = AcnetConfig::desk(6);
  desk.validate();
  CHECK(desk.fused_channels() == std::vector<int>{16, 16, 32, 64, 128});
  CHECK(desk.decoder_channels() == std::vector<int>{64, 32, 16, 16, 16});

  auto paper = AcnetConfig::paper(40);
  paper.validate();
  CHECK(paper.fused_channels() == std::vector<int>{64, 256, 512, 1024, 2048});
  CHECK(paper.decoder_channels() == std::vector<int>{1024, 512, 256, 128, 64});
  CHECK(paper.stages[2].blocks == 6);
  CHECK(paper.stem_kernel == 7);
}

TEST_CASE("config: invalid setups are rejected") {
  auto c = AcnetConfig::desk(6);
  c.stages.pop_back();
  CHECK_THROWS(c.validate());

  c = AcnetConfig::desk(6);
  c.stages[0].stride = 2;
  CHECK_THROWS(c.validate());

  c = AcnetConfig::desk(6);
  c.stages[3].channels = 0;
  CHECK_THROWS(c.validate());

  c = AcnetConfig::desk(6);
  c.classes = 1;
  CHECK_THROWS(c.validate());

  c = AcnetConfig::desk(6);
  c.stages[1].kind = acnet::BlockKind::kBottleneck;
  c.stages[1].channels = 30;
  CHECK_THROWS(c.validate());
}

TEST_CASE("model: head shapes run from 1/16 scale up to full resolution") {
  acnet::Rng r(101);
  auto m = acnet::init_model<float>(AcnetConfig::desk(6), r);
  auto rgb = rand_input<float>({2, 3, 64, 64}, r);
  auto depth = rand_input<float>({2, 1, 64, 64}, r);
  auto out = acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain);
  CHECK(out.heads[0].shape() == Shape{2, 6, 4, 4});
  CHECK(out.heads[1].shape() == Shape{2, 6, 8, 8});
  CHECK(out.heads[2].shape() == Shape{2, 6, 16, 16});
  CHECK(out.heads[3].shape() == Shape{2, 6, 32, 32});
  CHECK(out.heads[4].shape() == Shape{2, 6, 64, 64});
  CHECK(&out.final_logits() == &out.heads[4]);
  for (const auto& h : out.heads) {
    for (float v : h.data()) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("model: input validation") {
  acnet::Rng r(102);
  auto m = acnet::init_model<float>(AcnetConfig::desk(6), r);
  auto rgb = rand_input<float>({1, 3, 64, 64}, r);
  auto depth = rand_input<float>({1, 1, 64, 64}, r);
  CHECK_THROWS(acnet::model_forward(m, depth, depth, acnet::BnMode::kTrain));  // wrong channels
  CHECK_THROWS(acnet::model_forward(m, rgb, rand_input<float>({1, 1, 32, 32}, r),
                                    acnet::BnMode::kTrain));  // extent mismatch
  CHECK_THROWS(acnet::model_forward(m, rand_input<float>({1, 3, 48, 48}, r),
                                    rand_input<float>({1, 1, 48, 48}, r),
                                    acnet::BnMode::kTrain));  // not divisible by 32
  CHECK_THROWS(acnet::model_forward(m, rgb, depth, acnet::BnMode::kEval));  // stats never written
}

TEST_CASE("model: built parameter counts match the closed-form prediction per variant") {
  std::int64_t counts[3];
  int idx = 0;
  for (Variant v : {Variant::kModel1, Variant::kModel2, Variant::kFull}) {
    auto cfg = AcnetConfig::desk(6);
    cfg.variant = v;
    acnet::Rng r(103);
    auto m = acnet::init_model<float>(cfg, r);
    const auto built = acnet::param_count(m);
    CHECK(built == acnet::expected_param_count(cfg));
    counts[idx++] = built;
  }
  CHECK(counts[0] < counts[1]);  // plain sum < extra fusion branch
  CHECK(counts[1] < counts[2]);  // < gated fusion
  auto cfg = AcnetConfig::desk(6);
  CHECK(counts[2] - counts[1] == acnet::gate_param_count(cfg));
}

TEST_CASE("model: parameter names are unique and decay follows the weight/bias split") {
  auto cfg = AcnetConfig::desk(6);
  cfg.variant = Variant::kFull;
  acnet::Rng r(104);
  auto m = acnet::init_model<float>(cfg, r);
  std::set<std::string> names;
  acnet::for_each_param<float>(m, [&](const std::string& n, TensorF&, bool decay) {
    CHECK(names.insert(n).second);  // no duplicates
    const bool is_weight = n.size() > 2 && n.substr(n.size() - 2) == ".w";
    CHECK(decay == is_weight);
  });
  CHECK(names.count("rgb.stem.conv.w"));
  CHECK(names.count("depth.l4.b0.down.conv.w"));
  CHECK(names.count("fuse.l1.b0.conv1.w"));
  CHECK(names.count("acm.rgb.stem.w"));
  CHECK(names.count("acm.depth.l4.b"));
  CHECK(names.count("dec.s1.skip.w"));
  CHECK(names.count("dec.s5.head.b"));
  CHECK_FALSE(names.count("fuse.stem.conv.w"));  // fusion branch has no stem

  // norm layers visited for stat serialization line up with their params
  std::set<std::string> bns;
  acnet::for_each_bn<float>(m, [&](const std::string& n, acnet::BnParams<float>&) {
    CHECK(bns.insert(n).second);
    CHECK(names.count(n + ".g"));
  });
  CHECK(bns.count("rgb.stem.bn"));
  CHECK(bns.count("dec.s3.bn"));
}

TEST_CASE("model: same seed builds identical weights, different seeds differ") {
  auto cfg = AcnetConfig::desk(6);
  acnet::Rng r1(105), r2(105), r3(106);
  auto a = acnet::init_model<float>(cfg, r1);
  auto b = acnet::init_model<float>(cfg, r2);
  auto c = acnet::init_model<float>(cfg, r3);
  bool all_equal_ab = true, all_equal_ac = true;
  acnet::for_each_param<float>(a, [&](const std::string& n, TensorF& t, bool) {
    acnet::for_each_param<float>(b, [&](const std::string& n2, TensorF& t2, bool) {
      if (n == n2) {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
          if (t.data()[i] != t2.data()[i]) all_equal_ab = false;
        }
      }
    });
    acnet::for_each_param<float>(c, [&](const std::string& n2, TensorF& t2, bool) {
      if (n == n2 && n == "rgb.stem.conv.w") {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
          if (t.data()[i] != t2.data()[i]) all_equal_ac = false;
        }
      }
    });
  });
  CHECK(all_equal_ab);
  CHECK_FALSE(all_equal_ac);
}

TEST_CASE("model: full variant with bypassed gates reproduces the ungated variant exactly") {
  auto full_cfg = AcnetConfig::desk(6);
  full_cfg.variant = Variant::kFull;
  auto m2_cfg = AcnetConfig::desk(6);
  m2_cfg.variant = Variant::kModel2;

  acnet::Rng r(107);
  auto full = acnet::init_model<float>(full_cfg, r);
  acnet::Rng r2(777);  // different seed on purpose; weights get copied over
  auto m2 = acnet::init_model<float>(m2_cfg, r2);
  copy_shared_params(full, m2);

  auto rgb = rand_input<float>({1, 3, 64, 64}, r);
  auto depth = rand_input<float>({1, 1, 64, 64}, r);

  acnet::ForwardTrace<float> tf, t2;
  auto of = acnet::model_forward(full, rgb, depth, acnet::BnMode::kTrain, &tf, /*bypass_gates=*/true);
  auto o2 = acnet::model_forward(m2, rgb, depth, acnet::BnMode::kTrain, &t2);

  for (int h = 0; h < 5; ++h) {
    REQUIRE(of.heads[h].numel() == o2.heads[h].numel());
    for (std::int64_t i = 0; i < of.heads[h].numel(); ++i) {
      REQUIRE(of.heads[h].data()[i] == o2.heads[h].data()[i]);  // bitwise
    }
  }
  for (int s = 0; s < 5; ++s) {
    for (std::int64_t i = 0; i < tf.fused[s].numel(); ++i) {
      REQUIRE(tf.fused[s].data()[i] == t2.fused[s].data()[i]);
    }
    CHECK_FALSE(tf.acm_rgb_v[s].defined());  // gates never ran
  }
}

TEST_CASE("model: gates change the fused path but never the input branches") {
  auto cfg = AcnetConfig::desk(6);
  cfg.variant = Variant::kFull;
  acnet::Rng r(108);
  auto m = acnet::init_model<float>(cfg, r);
  auto rgb = rand_input<float>({1, 3, 64, 64}, r);
  auto depth = rand_input<float>({1, 1, 64, 64}, r);

  acnet::ForwardTrace<float> gated, plain;
  acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain, &gated, false);
  acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain, &plain, true);

  for (int s = 0; s < 5; ++s) {
    REQUIRE(gated.acm_rgb_v[s].defined());
    REQUIRE(gated.acm_depth_v[s].defined());
    for (float v : gated.acm_rgb_v[s].data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
    // branch activations identical: gating is strictly downstream of the branches
    for (std::int64_t i = 0; i < gated.rgb[s].numel(); ++i) {
      REQUIRE(gated.rgb[s].data()[i] == plain.rgb[s].data()[i]);
      REQUIRE(gated.depth[s].data()[i] == plain.depth[s].data()[i]);
    }
  }
  // fused maps must differ (gates are not the identity)
  bool any_diff = false;
  for (std::int64_t i = 0; i < gated.fused[0].numel(); ++i) {
    if (gated.fused[0].data()[i] != plain.fused[0].data()[i]) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("model: one backward pass touches every parameter") {
  auto cfg = AcnetConfig::desk(5);
  cfg.variant = Variant::kFull;
  acnet::Rng r(109);
  auto m = acnet::init_model<float>(cfg, r);
  auto rgb = rand_input<float>({1, 3, 64, 64}, r);
  auto depth = rand_input<float>({1, 1, 64, 64}, r);
  auto out = acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain);
  acnet::Tensor<float> loss;
  for (int h = 0; h < 5; ++h) {
    auto piece = acnet::mean(acnet::mul(out.heads[h], out.heads[h]));
    loss = loss.defined() ? acnet::add(loss, piece) : piece;
  }
  loss.backward();
  acnet::for_each_param<float>(m, [&](const std::string& n, TensorF& t, bool) {
    REQUIRE(t.requires_grad());
    float linf = 0;
    for (float g : t.grad()) linf = std::max(linf, std::abs(g));
    INFO("param ", n);
    CHECK(linf > 0.0f);
  });
}

TEST_CASE("model: forward is deterministic") {
  auto cfg = AcnetConfig::desk(6);
  acnet::Rng r(110);
  auto m = acnet::init_model<float>(cfg, r);
  auto rgb = rand_input<float>({1, 3, 64, 64}, r);
  auto depth = rand_input<float>({1, 1, 64, 64}, r);
  auto a = acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain);
  auto b = acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain);
  for (int h = 0; h < 5; ++h) {
    for (std::int64_t i = 0; i < a.heads[h].numel(); ++i) {
      REQUIRE(a.heads[h].data()[i] == b.heads[h].data()[i]);
    }
  }
}

TEST_CASE("model: spot gradients agree with finite differences") {
  auto cfg = AcnetConfig::desk(4);
  cfg.variant = Variant::kFull;
  acnet::Rng r(111);
  auto m = acnet::init_model<double>(cfg, r);
  auto rgb = rand_input<double>({2, 3, 32, 32}, r);
  auto depth = rand_input<double>({2, 1, 32, 32}, r);

  auto loss_value = [&] {
    auto out = acnet::model_forward(m, rgb, depth, acnet::BnMode::kTrain);
    TensorD loss;
    for (int h = 0; h < 5; ++h) {
      auto piece = acnet::mean(acnet::mul(out.heads[h], out.heads[h]));
      loss = loss.defined() ? acnet::add(loss, piece) : piece;
    }
    return loss;
  };

  acnet::for_each_param<double>(m, [](const std::string&, TensorD& t, bool) { t.zero_grad(); });
  loss_value().backward();

  std::unordered_map<std::string, TensorD> params;
  acnet::for_each_param<double>(m, [&](const std::string& n, TensorD& t, bool) {
    params.emplace(n, t);
  });
  const char* picks[] = {"rgb.stem.conv.w", "depth.l2.b0.conv1.w", "fuse.l3.b0.bn1.g",
                         "acm.rgb.l4.w",    "acm.depth.stem.b",    "dec.s1.skip.w",
                         "dec.s5.head.b",   "dec.s3.tconv.w"};
  acnet::Rng pick_rng(112);
  // 1e-6 keeps truncation error in check: the attenuated norm-paired init
  // sharpens curvature through the norm layers, and 1e-5 is too coarse there.
  const double h = 1e-6;
  for (const char* name : picks) {
    auto& t = params.at(name);
    for (int trial = 0; trial < 3; ++trial) {
      const auto i = static_cast<std::size_t>(pick_rng.uniform_int(static_cast<int>(t.numel())));
      auto& buf = t.node()->value;
      const double keep = buf[i];
      buf[i] = keep + h;
      const double up = loss_value().item();
      buf[i] = keep - h;
      const double dn = loss_value().item();
      buf[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = t.grad()[static_cast<std::int64_t>(i)];
      INFO(name, "[", i, "] analytic=", an, " fd=", fd);
      // Below ~1e-4 the central difference runs into its own noise floor
      // (loss rounding / h), so small gradients get an absolute bound instead
      // of a relative one.
      if (std::abs(an) > 1e-4 || std::abs(fd) > 1e-4) {
        CHECK(std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)) < 1e-4);
      } else {
        CHECK(std::abs(an - fd) < 1e-6);
      }
    }
  }
}
