#include "acnet/acm.hpp"

#include <cmath>
#include <stdexcept>

namespace acnet {

template <typename T>
AcmOutput<T> acm_forward(const Tensor<T>& a, const AcmParams<T>& p) {
  if (a.rank() != 4) throw std::invalid_argument("acm_forward: expected 4-d input");
  if (!p.w.defined() || a.dim(1) != p.channels()) {
    throw std::invalid_argument("acm_forward: input has " + std::to_string(a.dim(1)) +
                                " channels, gate built for " + std::to_string(p.channels()));
  }
  AcmOutput<T> out;
  auto squeezed = global_avg_pool(a);
  out.weights = sigmoid(conv2d(squeezed, p.w, p.b, 1, 0));
  out.gated = mul(a, out.weights);
  return out;
}

template <typename T>
AcmParams<T> init_acm(int channels, Rng& rng) {
  if (channels < 1) throw std::invalid_argument("init_acm: channels must be positive");
  AcmParams<T> p;
  const double bound = std::sqrt(6.0 / channels);  // fan_in of a 1x1 conv is C
  std::vector<T> w(static_cast<std::size_t>(channels) * channels);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  p.w = Tensor<T>::from_data({channels, channels, 1, 1}, std::move(w), true);
  p.b = Tensor<T>::zeros({channels}, true);
  return p;
}

template struct AcmParams<float>;
template struct AcmParams<double>;
template AcmOutput<float> acm_forward(const Tensor<float>&, const AcmParams<float>&);
template AcmOutput<double> acm_forward(const Tensor<double>&, const AcmParams<double>&);
template AcmParams<float> init_acm(int, Rng&);
template AcmParams<double> init_acm(int, Rng&);

}  // namespace acnet
