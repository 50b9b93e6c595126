#include "acnet/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace acnet {

namespace {

constexpr double kProbFloor = 1e-12;

// Derivative of -(1-s)^g * log(max(s, floor)) with respect to s, with the
// indeterminate forms at s -> 1 resolved by their limits.
double focal_dlds(double s, double gamma) {
  const double u = 1.0 - s;
  const double shat = std::max(s, kProbFloor);
  const double a = (gamma > 0.0 && u > 0.0) ? gamma * std::pow(u, gamma - 1.0) * std::log(shat) : 0.0;
  const double b = s > kProbFloor ? -std::pow(u, gamma) / s : 0.0;
  return a + b;
}

}  // namespace

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const IntRaster& labels, const FocalLossConfig& cfg) {
  if (cfg.gamma < 0) throw std::invalid_argument("focal_loss: gamma must be non-negative");
  if (logits.rank() != 4) throw std::invalid_argument("focal_loss: logits must be 4-d");
  const int N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  if (K < 2) throw std::invalid_argument("focal_loss: need at least 2 classes");
  if (labels.n != N || labels.h != H || labels.w != W) {
    throw std::invalid_argument("focal_loss: label raster " + std::to_string(labels.n) + "x" +
                                std::to_string(labels.h) + "x" + std::to_string(labels.w) +
                                " does not match logits " + shape_str(logits.shape()));
  }
  std::int64_t scored = 0;
  for (const std::int32_t v : labels.data) {
    if (v < 0 || v >= K) {
      throw std::invalid_argument("focal_loss: label " + std::to_string(v) + " outside [0, " +
                                  std::to_string(K) + ")");
    }
    if (v != cfg.ignore_index) ++scored;
  }
  if (scored == 0) throw std::invalid_argument("focal_loss: every pixel carries the ignore index");

  auto px = logits.node_ptr();
  const T* zv = px->value.data();
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  const std::int64_t sample = static_cast<std::int64_t>(K) * plane;

  std::vector<double> prob(static_cast<std::size_t>(K));
  double total = 0;
  for (int n = 0; n < N; ++n) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::int32_t t = labels.at(n, y, x);
        if (t == cfg.ignore_index) continue;
        const std::int64_t base = n * sample + static_cast<std::int64_t>(y) * W + x;
        double zmax = zv[base];
        for (int k = 1; k < K; ++k) zmax = std::max(zmax, static_cast<double>(zv[base + k * plane]));
        double zsum = 0;
        for (int k = 0; k < K; ++k) zsum += std::exp(static_cast<double>(zv[base + k * plane]) - zmax);
        const double s = std::exp(static_cast<double>(zv[base + t * plane]) - zmax) / zsum;
        total += -std::pow(1.0 - s, cfg.gamma) * std::log(std::max(s, kProbFloor));
      }
    }
  }

  const double gamma = cfg.gamma;
  const int ignore = cfg.ignore_index;
  const IntRaster saved_labels = labels;
  auto backward = [px, saved_labels, gamma, ignore, N, K, H, W, plane, sample,
                   scored](TensorNode<T>& self) {
    if (!px->requires_grad) return;
    const T g0 = self.grad[0];
    const T* zv = px->value.data();
    T* dz = px->grad.data();
    std::vector<double> prob(static_cast<std::size_t>(K));
    for (int n = 0; n < N; ++n) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const std::int32_t t = saved_labels.at(n, y, x);
          if (t == ignore) continue;
          const std::int64_t base = n * sample + static_cast<std::int64_t>(y) * W + x;
          double zmax = zv[base];
          for (int k = 1; k < K; ++k) zmax = std::max(zmax, static_cast<double>(zv[base + k * plane]));
          double zsum = 0;
          for (int k = 0; k < K; ++k) {
            prob[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(zv[base + k * plane]) - zmax);
            zsum += prob[static_cast<std::size_t>(k)];
          }
          for (int k = 0; k < K; ++k) prob[static_cast<std::size_t>(k)] /= zsum;
          const double s = prob[static_cast<std::size_t>(t)];
          const double coef = static_cast<double>(g0) * focal_dlds(s, gamma) / static_cast<double>(scored);
          for (int k = 0; k < K; ++k) {
            const double delta = k == t ? 1.0 : 0.0;
            dz[base + k * plane] += static_cast<T>(coef * s * (delta - prob[static_cast<std::size_t>(k)]));
          }
        }
      }
    }
  };

  auto node = std::make_shared<TensorNode<T>>();
  node->shape = {1};
  node->value = {static_cast<T>(total / static_cast<double>(scored))};
  if (grad_enabled() && px->requires_grad) {
    node->requires_grad = true;
    node->grad.assign(1, T(0));
    node->parents = {px};
    node->backward_fn = backward;
  }
  return Tensor<T>(std::move(node));
}

IntRaster downsample_labels_nearest(const IntRaster& labels, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be positive");
  if (factor == 1) return labels;
  if (labels.h % factor != 0 || labels.w % factor != 0) {
    throw std::invalid_argument("downsample: extents " + std::to_string(labels.h) + "x" +
                                std::to_string(labels.w) + " not divisible by " +
                                std::to_string(factor));
  }
  IntRaster out(labels.n, labels.h / factor, labels.w / factor);
  for (int n = 0; n < labels.n; ++n) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) out.at(n, y, x) = labels.at(n, y * factor, x * factor);
    }
  }
  return out;
}

template <typename T>
Tensor<T> deep_supervision_loss(const std::array<Tensor<T>, 5>& heads, const IntRaster& labels,
                                const FocalLossConfig& cfg) {
  Tensor<T> total;
  for (const auto& head : heads) {
    if (!head.defined() || head.rank() != 4) {
      throw std::invalid_argument("deep_supervision_loss: five 4-d logit tensors required");
    }
    if (labels.h % head.dim(2) != 0 || labels.w % head.dim(3) != 0 ||
        labels.h / head.dim(2) != labels.w / head.dim(3)) {
      throw std::invalid_argument("deep_supervision_loss: head " + shape_str(head.shape()) +
                                  " is not an integer shrink of the labels");
    }
    const int factor = labels.h / head.dim(2);
    auto piece = focal_loss(head, downsample_labels_nearest(labels, factor), cfg);
    total = total.defined() ? add(total, piece) : piece;
  }
  return scale(total, T(1) / T(5));
}

template Tensor<float> focal_loss(const Tensor<float>&, const IntRaster&, const FocalLossConfig&);
template Tensor<double> focal_loss(const Tensor<double>&, const IntRaster&, const FocalLossConfig&);
template Tensor<float> deep_supervision_loss(const std::array<Tensor<float>, 5>&, const IntRaster&,
                                             const FocalLossConfig&);
template Tensor<double> deep_supervision_loss(const std::array<Tensor<double>, 5>&, const IntRaster&,
                                              const FocalLossConfig&);

}  // namespace acnet
