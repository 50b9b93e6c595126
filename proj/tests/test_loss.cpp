#include "doctest.h"

#include <array>
#include <cmath>
#include <vector>

#include "acnet/gradcheck.hpp"
#include "acnet/loss.hpp"
#include "acnet/rng.hpp"

using acnet::FocalLossConfig;
using acnet::IntRaster;
using acnet::Shape;
using acnet::TensorD;

namespace {

TensorD rand_logits(Shape s, acnet::Rng& r, double amp = 2.0, bool rg = false) {
  std::vector<double> v(static_cast<std::size_t>(acnet::shape_numel(s)));
  for (auto& x : v) x = r.uniform(-amp, amp);
  return TensorD::from_data(std::move(s), std::move(v), rg);
}

IntRaster rand_labels(int n, int h, int w, int classes, acnet::Rng& r, double ignore_frac = 0.2) {
  IntRaster out(n, h, w);
  for (auto& v : out.data) {
    v = r.uniform() < ignore_frac ? 0 : 1 + r.uniform_int(classes - 1);
  }
  return out;
}

// independent log-softmax cross-entropy, mean over scored pixels
double ce_oracle(const TensorD& logits, const IntRaster& labels, int ignore) {
  const int N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  double total = 0;
  std::int64_t scored = 0;
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int t = labels.at(n, y, x);
        if (t == ignore) continue;
        double zmax = -1e300, zsum = 0;
        for (int k = 0; k < K; ++k) {
          zmax = std::max(zmax, logits.data()[acnet::index4(logits.shape(), n, k, y, x)]);
        }
        for (int k = 0; k < K; ++k) {
          zsum += std::exp(logits.data()[acnet::index4(logits.shape(), n, k, y, x)] - zmax);
        }
        const double logp = logits.data()[acnet::index4(logits.shape(), n, t, y, x)] - zmax -
                            std::log(zsum);
        total += -logp;
        ++scored;
      }
  return total / static_cast<double>(scored);
}

}  // namespace

TEST_CASE("focal: single pixel with even logits and gamma 2 gives 0.173287") {
  auto logits = TensorD::from_data({1, 2, 1, 1}, {0.0, 0.0});
  IntRaster labels(1, 1, 1, 1);  // true class 1; 0 would be ignored
  auto loss = acnet::focal_loss(logits, labels, FocalLossConfig{2.0, 0});
  CHECK(loss.item() == doctest::Approx(0.173287).epsilon(1e-5));
}

TEST_CASE("focal: gamma 0 reduces to cross-entropy") {
  acnet::Rng r(71);
  auto logits = rand_logits({2, 4, 5, 5}, r);
  auto labels = rand_labels(2, 5, 5, 4, r);
  auto loss = acnet::focal_loss(logits, labels, FocalLossConfig{0.0, 0});
  CHECK(loss.item() == doctest::Approx(ce_oracle(logits, labels, 0)).epsilon(1e-6));
}

TEST_CASE("focal: confident correct predictions drive the loss to zero") {
  IntRaster labels(1, 2, 2);
  std::vector<double> z(3 * 4, 0.0);
  for (int i = 0; i < 4; ++i) {
    labels.data[static_cast<std::size_t>(i)] = 2;
    z[2 * 4 + static_cast<std::size_t>(i)] = 30.0;  // huge margin for class 2
  }
  auto loss = acnet::focal_loss(TensorD::from_data({1, 3, 2, 2}, std::move(z)), labels,
                                FocalLossConfig{2.0, 0});
  CHECK(loss.item() >= 0.0);
  CHECK(loss.item() < 1e-6);
}

TEST_CASE("focal: ignored pixels drop out of the mean entirely") {
  acnet::Rng r(72);
  auto logits = rand_logits({1, 3, 2, 2}, r);
  IntRaster mixed(1, 2, 2);
  mixed.data = {1, 0, 2, 0};  // two scored, two ignored

  // reference: same logits restricted to the scored pixels only
  double expect = 0;
  const std::pair<int, int> scored[] = {{0, 1}, {2, 2}};
  for (const auto& [idx, t] : scored) {
    double zmax = -1e300, zsum = 0;
    for (int k = 0; k < 3; ++k) {
      zmax = std::max(zmax, logits.data()[k * 4 + idx]);
    }
    for (int k = 0; k < 3; ++k) zsum += std::exp(logits.data()[k * 4 + idx] - zmax);
    const double s = std::exp(logits.data()[t * 4 + idx] - zmax) / zsum;
    expect += -std::pow(1 - s, 2.0) * std::log(s);
  }
  expect /= 2;
  auto loss = acnet::focal_loss(logits, mixed, FocalLossConfig{2.0, 0});
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("focal: error cases") {
  acnet::Rng r(73);
  auto logits = rand_logits({1, 3, 2, 2}, r);
  IntRaster all_ignored(1, 2, 2, 0);
  CHECK_THROWS(acnet::focal_loss(logits, all_ignored, FocalLossConfig{2.0, 0}));

  IntRaster bad(1, 2, 2, 1);
  bad.data[3] = 3;  // K = 3, so 3 is out of range
  CHECK_THROWS(acnet::focal_loss(logits, bad, FocalLossConfig{2.0, 0}));

  IntRaster wrong_shape(1, 3, 3, 1);
  CHECK_THROWS(acnet::focal_loss(logits, wrong_shape, FocalLossConfig{2.0, 0}));

  IntRaster ok(1, 2, 2, 1);
  CHECK_THROWS(acnet::focal_loss(logits, ok, FocalLossConfig{-1.0, 0}));
}

TEST_CASE("focal: gamma 2 never exceeds cross-entropy") {
  acnet::Rng r(74);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = rand_logits({1, 4, 1, 1}, r, 3.0);
    IntRaster labels(1, 1, 1, 1 + r.uniform_int(3));
    const double focal = acnet::focal_loss(logits, labels, FocalLossConfig{2.0, 0}).item();
    const double ce = acnet::focal_loss(logits, labels, FocalLossConfig{0.0, 0}).item();
    CHECK(focal >= 0.0);
    CHECK(focal <= ce + 1e-12);
  }
}

TEST_CASE("focal: strictly decreasing as the true-class probability rises") {
  double prev = 1e300;
  for (double margin = -2.0; margin <= 2.01; margin += 0.5) {
    auto logits = TensorD::from_data({1, 2, 1, 1}, {0.0, margin});
    IntRaster labels(1, 1, 1, 1);
    const double loss = acnet::focal_loss(logits, labels, FocalLossConfig{2.0, 0}).item();
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("focal: gradients match central differences") {
  acnet::Rng r(75);
  auto logits = rand_logits({2, 3, 4, 4}, r, 2.0, true);
  auto labels = rand_labels(2, 4, 4, 3, r);
  for (const double gamma : {2.0, 0.0, 0.5, 5.0}) {
    // large exponents inflate the loss's third derivative near p_t = 1, which
    // limits central-difference accuracy, so the bound widens there
    const double rel_tol = gamma > 2.0 ? 1e-4 : 1e-5;
    const auto res = acnet::check_gradients(
        "focal", {logits},
        [labels, gamma](const std::vector<TensorD>& in) {
          return acnet::focal_loss(in[0], labels, FocalLossConfig{gamma, 0});
        },
        1e-6, rel_tol);
    INFO("gamma=", gamma, " rel=", res.max_rel_err, " abs=", res.max_abs_err);
    CHECK(res.passed);
  }
}

TEST_CASE("focal: gradients stay correct at extreme logit magnitudes") {
  acnet::Rng r(76);
  auto logits = rand_logits({1, 3, 2, 2}, r, 30.0, true);
  auto labels = rand_labels(1, 2, 2, 3, r, 0.0);
  const auto res = acnet::check_gradients(
      "focal_extreme", {logits}, [labels](const std::vector<TensorD>& in) {
        return acnet::focal_loss(in[0], labels, FocalLossConfig{2.0, 0});
      },
      1e-5, 1e-4, 1e-7);
  INFO("rel=", res.max_rel_err, " abs=", res.max_abs_err);
  CHECK(res.passed);
  for (double g : logits.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("focal: participates in a larger tape") {
  acnet::Rng r(77);
  auto x = rand_logits({1, 2, 4, 4}, r, 1.0, true);
  auto w = rand_logits({3, 2, 1, 1}, r, 1.0, true);
  auto labels = rand_labels(1, 4, 4, 3, r);
  auto loss = acnet::focal_loss(acnet::conv2d(x, w, TensorD{}, 1, 0), labels,
                                FocalLossConfig{2.0, 0});
  loss.backward();
  double linf = 0;
  for (double g : w.grad()) linf = std::max(linf, std::abs(g));
  CHECK(linf > 0.0);
}

TEST_CASE("labels: nearest downsample keeps each block's top-left sample") {
  IntRaster labels(1, 2, 2);
  labels.data = {1, 1, 2, 2};
  auto out = acnet::downsample_labels_nearest(labels, 2);
  CHECK(out.h == 1);
  CHECK(out.w == 1);
  CHECK(out.data[0] == 1);

  IntRaster big(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) big.at(0, y, x) = y * 4 + x;
  auto half = acnet::downsample_labels_nearest(big, 2);
  CHECK(half.at(0, 0, 0) == 0);
  CHECK(half.at(0, 0, 1) == 2);
  CHECK(half.at(0, 1, 0) == 8);
  CHECK(half.at(0, 1, 1) == 10);

  CHECK_THROWS(acnet::downsample_labels_nearest(IntRaster(1, 3, 3), 2));
  auto same = acnet::downsample_labels_nearest(big, 1);
  CHECK(same.data == big.data);
}

TEST_CASE("deep supervision: averages the five per-scale losses") {
  acnet::Rng r(78);
  const int K = 4;
  std::array<TensorD, 5> heads;
  const int sizes[5] = {1, 2, 4, 8, 16};
  for (int i = 0; i < 5; ++i) {
    heads[static_cast<std::size_t>(i)] = rand_logits({2, K, sizes[i], sizes[i]}, r);
  }
  auto labels = rand_labels(2, 16, 16, K, r);
  // the coarsest head sees only each sample's top-left pixel, so keep those
  // scored to guarantee every scale has at least one contributing position
  labels.at(0, 0, 0) = 1;
  labels.at(1, 0, 0) = 2;
  const FocalLossConfig cfg{2.0, 0};

  double expect = 0;
  for (int i = 0; i < 5; ++i) {
    const auto down = acnet::downsample_labels_nearest(labels, 16 / sizes[i]);
    expect += acnet::focal_loss(heads[static_cast<std::size_t>(i)], down, cfg).item();
  }
  expect /= 5;
  auto total = acnet::deep_supervision_loss(heads, labels, cfg);
  CHECK(total.item() == doctest::Approx(expect).epsilon(1e-12));

  // mismatched head resolution is refused
  auto bad = heads;
  bad[1] = rand_logits({2, K, 3, 3}, r);
  CHECK_THROWS(acnet::deep_supervision_loss(bad, labels, cfg));
}

TEST_CASE("deep supervision: perfect outputs at every scale give zero loss") {
  const int K = 3;
  IntRaster labels(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) labels.at(0, y, x) = 1 + (y >= 8);
  std::array<TensorD, 5> heads;
  const int sizes[5] = {1, 2, 4, 8, 16};
  for (int i = 0; i < 5; ++i) {
    const int hsz = sizes[i];
    const auto down = acnet::downsample_labels_nearest(labels, 16 / hsz);
    std::vector<double> z(static_cast<std::size_t>(K) * hsz * hsz, 0.0);
    for (int y = 0; y < hsz; ++y)
      for (int x = 0; x < hsz; ++x) {
        z[static_cast<std::size_t>(down.at(0, y, x) * hsz * hsz + y * hsz + x)] = 40.0;
      }
    heads[static_cast<std::size_t>(i)] = TensorD::from_data({1, K, hsz, hsz}, std::move(z));
  }
  auto total = acnet::deep_supervision_loss(heads, labels, FocalLossConfig{2.0, 0});
  CHECK(total.item() >= 0.0);
  CHECK(total.item() < 1e-6);
}

TEST_CASE("focal: evaluation is deterministic") {
  acnet::Rng r(79);
  auto logits = rand_logits({2, 5, 8, 8}, r);
  auto labels = rand_labels(2, 8, 8, 5, r);
  const double a = acnet::focal_loss(logits, labels, FocalLossConfig{2.0, 0}).item();
  const double b = acnet::focal_loss(logits, labels, FocalLossConfig{2.0, 0}).item();
  CHECK(a == b);
}
