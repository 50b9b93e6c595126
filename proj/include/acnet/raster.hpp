#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace acnet {

// Dense N x H x W map of integer class ids.
struct IntRaster {
  int n = 0, h = 0, w = 0;
  std::vector<std::int32_t> data;

  IntRaster() = default;
  IntRaster(int n_, int h_, int w_, std::int32_t fill = 0)
      : n(n_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * h_ * w_, fill) {
    if (n_ < 1 || h_ < 1 || w_ < 1) throw std::invalid_argument("IntRaster: extents must be positive");
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  std::int32_t& at(int i, int y, int x) {
    return data[(static_cast<std::size_t>(i) * h + y) * w + x];
  }
  std::int32_t at(int i, int y, int x) const {
    return data[(static_cast<std::size_t>(i) * h + y) * w + x];
  }

  bool same_shape(const IntRaster& o) const { return n == o.n && h == o.h && w == o.w; }
};

}  // namespace acnet
