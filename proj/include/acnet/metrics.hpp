#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acnet/raster.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

// K x K pixel-count matrix indexed [truth][pred]; pixels whose ground truth
// carries the ignore index are never scored.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes, int ignore_index = 0);

  void update(const IntRaster& pred, const IntRaster& truth);
  void merge(const ConfusionMatrix& other);

  int classes() const { return classes_; }
  int ignore_index() const { return ignore_; }
  std::int64_t count(int truth, int pred) const;
  std::int64_t total() const;

  struct Report {
    std::vector<double> iou;    // per class; 0 where invalid
    std::vector<bool> valid;    // classes with nonzero union, ignore excluded
    double miou = 0;            // mean over valid classes
    double pixel_acc = 0;
  };
  // Throws when no pixel has been scored yet.
  Report report() const;

  // header `class,iou`, one row per valid class, then miou and pixel_acc
  // footers; six decimal places throughout.
  std::string to_csv() const;

 private:
  int classes_;
  int ignore_;
  std::vector<std::int64_t> counts_;
};

// Per-pixel argmax over the class axis; the lowest index wins ties.
template <typename T>
IntRaster argmax_labels(const Tensor<T>& logits);

}  // namespace acnet
