#include "acnet/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace acnet {

ConfusionMatrix::ConfusionMatrix(int classes, int ignore_index)
    : classes_(classes), ignore_(ignore_index),
      counts_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 2) throw std::invalid_argument("ConfusionMatrix: need at least 2 classes");
  if (ignore_index < 0 || ignore_index >= classes) {
    throw std::invalid_argument("ConfusionMatrix: ignore index outside class range");
  }
}

void ConfusionMatrix::update(const IntRaster& pred, const IntRaster& truth) {
  if (!pred.same_shape(truth)) {
    throw std::invalid_argument("ConfusionMatrix: prediction and truth shapes differ");
  }
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    const std::int32_t t = truth.data[i];
    const std::int32_t p = pred.data[i];
    if (t < 0 || t >= classes_ || p < 0 || p >= classes_) {
      throw std::invalid_argument("ConfusionMatrix: class id outside [0, " +
                                  std::to_string(classes_) + ")");
    }
    if (t == ignore_) continue;
    ++counts_[static_cast<std::size_t>(t) * classes_ + static_cast<std::size_t>(p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_ || other.ignore_ != ignore_) {
    throw std::invalid_argument("ConfusionMatrix: cannot merge differently shaped matrices");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::count(int truth, int pred) const {
  return counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(pred)];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto c : counts_) t += c;
  return t;
}

ConfusionMatrix::Report ConfusionMatrix::report() const {
  const std::int64_t all = total();
  if (all == 0) throw std::runtime_error("ConfusionMatrix: no scored pixels");

  Report r;
  r.iou.assign(static_cast<std::size_t>(classes_), 0.0);
  r.valid.assign(static_cast<std::size_t>(classes_), false);
  std::int64_t correct = 0;
  double iou_sum = 0;
  int iou_n = 0;
  for (int c = 0; c < classes_; ++c) {
    const std::int64_t inter = count(c, c);
    correct += inter;
    if (c == ignore_) continue;
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < classes_; ++k) {
      row += count(c, k);
      col += count(k, c);
    }
    const std::int64_t uni = row + col - inter;
    if (uni == 0) continue;  // class absent from both sides
    r.valid[static_cast<std::size_t>(c)] = true;
    r.iou[static_cast<std::size_t>(c)] = static_cast<double>(inter) / static_cast<double>(uni);
    iou_sum += r.iou[static_cast<std::size_t>(c)];
    ++iou_n;
  }
  r.miou = iou_n > 0 ? iou_sum / iou_n : 0.0;
  r.pixel_acc = static_cast<double>(correct) / static_cast<double>(all);
  return r;
}

std::string ConfusionMatrix::to_csv() const {
  const Report r = report();
  std::string out = "class,iou\n";
  char line[64];
  for (int c = 0; c < classes_; ++c) {
    if (!r.valid[static_cast<std::size_t>(c)]) continue;
    std::snprintf(line, sizeof(line), "%d,%.6f\n", c, r.iou[static_cast<std::size_t>(c)]);
    out += line;
  }
  std::snprintf(line, sizeof(line), "miou,%.6f\n", r.miou);
  out += line;
  std::snprintf(line, sizeof(line), "pixel_acc,%.6f\n", r.pixel_acc);
  out += line;
  return out;
}

template <typename T>
IntRaster argmax_labels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw std::invalid_argument("argmax_labels: logits must be 4-d");
  const int N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  IntRaster out(N, H, W);
  const T* z = logits.data().data();
  for (int n = 0; n < N; ++n) {
    const std::int64_t base_n = static_cast<std::int64_t>(n) * K * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      T best = z[base_n + i];
      int best_k = 0;
      for (int k = 1; k < K; ++k) {
        const T v = z[base_n + k * plane + i];
        if (v > best) {  // strict: earlier class wins ties
          best = v;
          best_k = k;
        }
      }
      out.data[static_cast<std::size_t>(n) * plane + static_cast<std::size_t>(i)] = best_k;
    }
  }
  return out;
}

template IntRaster argmax_labels(const Tensor<float>&);
template IntRaster argmax_labels(const Tensor<double>&);

}  // namespace acnet
