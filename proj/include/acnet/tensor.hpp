#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace acnet {

// Extents in N x C x H x W order for image-like data. Row-major storage.
using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

inline std::int64_t index4(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w;
}

// One node of the computation graph. `backward_fn` reads this node's grad
// and accumulates into the parents' grads; leaves have no backward_fn.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized like value iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  bool is_leaf() const { return !backward_fn; }
};

// Shared-handle tensor. Copying the handle aliases the node, which is what
// the graph needs; clone_detached() gives an independent value copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, T value, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return node_->numel(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  T item() const;
  Tensor clone_detached() const;

  // Backpropagate from a scalar root; leaf grads accumulate across calls.
  void backward() const;

  TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Topologically ordered record of the operations reachable from a root.
// backward() seeds the root with 1 and sweeps the record in reverse.
template <typename T>
class Tape {
 public:
  static Tape trace(const Tensor<T>& root);
  void backward();
  const std::vector<TensorNode<T>*>& order() const { return order_; }

 private:
  std::vector<TensorNode<T>*> order_;
  std::shared_ptr<TensorNode<T>> root_;
};

// While any guard is alive on this thread, ops produce plain values and
// record nothing. Used for inference over frozen weights.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// ---- elementwise ----
// Binary ops broadcast: ranks must match and each extent must agree or be 1.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// ---- reductions ----
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

// ---- convolution ----
// x: N x Cin x H x W, w: Cout x Cin x kh x kw, b: Cout or undefined.
// Cross-correlation with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int padding);

// Adjoint of conv2d. w: Cin x Cout x kh x kw; out extent (H-1)*stride - 2p + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride, int padding);

// ---- batch norm ----
enum class BnMode { kTrain, kEval };

template <typename T>
struct BnRunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  bool initialized = false;

  void reset(int channels) {
    mean.assign(static_cast<std::size_t>(channels), T(0));
    var.assign(static_cast<std::size_t>(channels), T(1));
    initialized = false;
  }
};

// Train mode normalizes by the batch statistics (biased variance) and folds
// them into the running stats; eval mode requires initialized running stats.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BnRunningStats<T>& stats, BnMode mode,
                       T eps = T(1e-5), T momentum = T(0.1));

// ---- pooling ----
// 3x3 window, stride 2, padding 1. Gradient goes to the first (row-major)
// maximal element of each window.
template <typename T> Tensor<T> max_pool_3x3s2(const Tensor<T>& x);
// N x C x H x W -> N x C x 1 x 1 spatial mean.
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace acnet
