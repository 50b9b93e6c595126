#include "doctest.h"

#include <algorithm>
#include <vector>

#include "acnet/metrics.hpp"
#include "acnet/rng.hpp"

using acnet::ConfusionMatrix;
using acnet::IntRaster;
using acnet::TensorD;

namespace {

IntRaster rand_raster(int h, int w, int classes, acnet::Rng& r, bool allow_ignore = true) {
  IntRaster out(1, h, w);
  for (auto& v : out.data) {
    v = allow_ignore ? r.uniform_int(classes) : 1 + r.uniform_int(classes - 1);
  }
  return out;
}

// brute-force per-pixel counter, no shortcuts shared with the implementation
std::vector<std::int64_t> count_oracle(const IntRaster& pred, const IntRaster& truth, int k,
                                       int ignore) {
  std::vector<std::int64_t> m(static_cast<std::size_t>(k) * k, 0);
  for (int i = 0; i < truth.n; ++i)
    for (int y = 0; y < truth.h; ++y)
      for (int x = 0; x < truth.w; ++x) {
        if (truth.at(i, y, x) == ignore) continue;
        ++m[static_cast<std::size_t>(truth.at(i, y, x)) * k +
            static_cast<std::size_t>(pred.at(i, y, x))];
      }
  return m;
}

}  // namespace

TEST_CASE("miou: half right on one class, absent on another, averages to 0.25") {
  // truth: 4 pixels class 1, 4 pixels class 2; prediction says class 1 everywhere
  IntRaster truth(1, 2, 4), pred(1, 2, 4, 1);
  truth.data = {1, 1, 1, 1, 2, 2, 2, 2};
  ConfusionMatrix cm(3);
  cm.update(pred, truth);
  const auto rep = cm.report();
  CHECK(rep.iou[1] == 0.5);
  CHECK(rep.iou[2] == 0.0);
  CHECK(rep.valid[1]);
  CHECK(rep.valid[2]);
  CHECK(rep.miou == 0.25);
  CHECK(rep.pixel_acc == 0.5);

  CHECK(cm.to_csv() == "class,iou\n1,0.500000\n2,0.000000\nmiou,0.250000\npixel_acc,0.500000\n");
}

TEST_CASE("miou: perfect prediction scores 1.0 everywhere") {
  acnet::Rng r(81);
  auto truth = rand_raster(8, 8, 5, r, false);
  ConfusionMatrix cm(5);
  cm.update(truth, truth);
  const auto rep = cm.report();
  CHECK(rep.miou == 1.0);
  CHECK(rep.pixel_acc == 1.0);
}

TEST_CASE("miou: matrix matches the brute-force oracle on 50 random pairs") {
  acnet::Rng r(82);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 6;
    auto truth = rand_raster(16, 16, k, r);
    auto pred = rand_raster(16, 16, k, r);
    ConfusionMatrix cm(k);
    cm.update(pred, truth);
    const auto expect = count_oracle(pred, truth, k, 0);
    for (int t = 0; t < k; ++t)
      for (int p = 0; p < k; ++p) {
        REQUIRE(cm.count(t, p) == expect[static_cast<std::size_t>(t) * k + p]);
      }

    // per-class IoU recomputed independently from the oracle matrix
    const auto rep = cm.report();
    double iou_sum = 0;
    int iou_n = 0;
    for (int c = 1; c < k; ++c) {
      std::int64_t row = 0, col = 0;
      for (int j = 0; j < k; ++j) {
        row += expect[static_cast<std::size_t>(c) * k + j];
        col += expect[static_cast<std::size_t>(j) * k + c];
      }
      const std::int64_t inter = expect[static_cast<std::size_t>(c) * k + c];
      const std::int64_t uni = row + col - inter;
      if (uni == 0) {
        CHECK_FALSE(rep.valid[static_cast<std::size_t>(c)]);
        continue;
      }
      const double iou = static_cast<double>(inter) / static_cast<double>(uni);
      REQUIRE(rep.iou[static_cast<std::size_t>(c)] == iou);
      iou_sum += iou;
      ++iou_n;
    }
    REQUIRE(rep.miou == doctest::Approx(iou_sum / iou_n).epsilon(1e-15));
  }
}

TEST_CASE("miou: update order never matters and merge equals one pass") {
  acnet::Rng r(83);
  std::vector<std::pair<IntRaster, IntRaster>> batches;
  for (int i = 0; i < 6; ++i) batches.emplace_back(rand_raster(5, 7, 4, r), rand_raster(5, 7, 4, r));

  ConfusionMatrix forward(4), reversed(4), merged(4);
  for (const auto& [p, t] : batches) forward.update(p, t);
  for (auto it = batches.rbegin(); it != batches.rend(); ++it) reversed.update(it->first, it->second);
  for (const auto& [p, t] : batches) {
    ConfusionMatrix shard(4);
    shard.update(p, t);
    merged.merge(shard);
  }
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) {
      CHECK(forward.count(t, p) == reversed.count(t, p));
      CHECK(forward.count(t, p) == merged.count(t, p));
    }
}

TEST_CASE("miou: invariant under a consistent class relabeling") {
  acnet::Rng r(84);
  auto truth = rand_raster(12, 12, 5, r);
  auto pred = rand_raster(12, 12, 5, r);
  ConfusionMatrix cm(5);
  cm.update(pred, truth);

  const int perm[5] = {0, 3, 1, 4, 2};  // ignore class stays put
  auto relabel = [&](const IntRaster& in) {
    IntRaster out = in;
    for (auto& v : out.data) v = perm[v];
    return out;
  };
  ConfusionMatrix cm2(5);
  cm2.update(relabel(pred), relabel(truth));
  CHECK(cm.report().miou == doctest::Approx(cm2.report().miou).epsilon(1e-15));
  CHECK(cm.report().pixel_acc == doctest::Approx(cm2.report().pixel_acc).epsilon(1e-15));
}

TEST_CASE("miou: all-ignored truth leaves the matrix empty") {
  ConfusionMatrix cm(4);
  IntRaster truth(1, 3, 3, 0);
  IntRaster pred(1, 3, 3, 2);
  cm.update(pred, truth);
  CHECK(cm.total() == 0);
  CHECK_THROWS(cm.report());
}

TEST_CASE("miou: error handling") {
  ConfusionMatrix cm(4);
  IntRaster a(1, 2, 2, 1), b(1, 2, 3, 1);
  CHECK_THROWS(cm.update(a, b));  // shape mismatch
  IntRaster bad(1, 2, 2, 1);
  bad.data[0] = 9;
  CHECK_THROWS(cm.update(bad, a));  // class out of range
  CHECK_THROWS(ConfusionMatrix(1));
  CHECK_THROWS(ConfusionMatrix(4, 7));
  ConfusionMatrix other(5);
  CHECK_THROWS(cm.merge(other));
}

TEST_CASE("argmax: picks the highest class, lowest index on ties") {
  auto logits = TensorD::from_data({1, 3, 2, 2},
                                   {/* class 0 */ 1.0, 5.0, 2.0, 7.0,
                                    /* class 1 */ 3.0, 5.0, 2.0, 9.0,
                                    /* class 2 */ 2.0, 5.0, 1.0, 9.0});
  auto out = acnet::argmax_labels(logits);
  CHECK(out.at(0, 0, 0) == 1);  // 3 beats 1 and 2
  CHECK(out.at(0, 0, 1) == 0);  // three-way tie -> class 0
  CHECK(out.at(0, 1, 0) == 0);  // tie between 0 and 1 -> class 0
  CHECK(out.at(0, 1, 1) == 1);  // tie between 1 and 2 -> class 1
}
