#include "acnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace acnet {

namespace {
thread_local int g_no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

static void check_shape_positive(const Shape& s) {
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(s));
  }
}

// ---------------------------------------------------------------------------
// Tensor basics

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape s, bool requires_grad) {
  check_shape_positive(s);
  auto node = std::make_shared<TensorNode<T>>();
  node->value.assign(static_cast<std::size_t>(shape_numel(s)), T(0));
  node->shape = std::move(s);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), T(0));
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape s, T value, bool requires_grad) {
  Tensor<T> t = zeros(std::move(s), requires_grad);
  std::fill(t.node()->value.begin(), t.node()->value.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape s, std::vector<T> data, bool requires_grad) {
  check_shape_positive(s);
  if (static_cast<std::int64_t>(data.size()) != shape_numel(s)) {
    throw std::invalid_argument("from_data: buffer length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(s));
  }
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(s);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), T(0));
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from_data({1}, {value});
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone_detached() const {
  return from_data(node_->shape, node_->value, false);
}

// ---------------------------------------------------------------------------
// Op construction

template <typename T>
static Tensor<T> make_op(Shape shape, std::vector<T> value,
                         std::vector<std::shared_ptr<TensorNode<T>>> parents,
                         std::function<void(TensorNode<T>&)> fn) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents) rg = rg || (p && p->requires_grad);
  }
  if (rg) {
    node->requires_grad = true;
    node->grad.assign(node->value.size(), T(0));
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// Broadcasting

static Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("broadcast: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

// Row-major strides of `in` viewed inside `out`; 0 where `in` is stretched.
static std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> strides(in.size(), 0);
  std::int64_t acc = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    strides[ui] = (in[ui] == 1 && out[ui] != 1) ? 0 : acc;
    acc *= in[ui];
  }
  return strides;
}

// Walks the output index space once, handing flat offsets into a, b and out.
template <typename Fn>
static void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                               const std::vector<std::int64_t>& sb, Fn&& fn) {
  const std::int64_t n = shape_numel(out);
  const int rank = static_cast<int>(out.size());
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t io = 0; io < n; ++io) {
    fn(io, ia, ib);
    for (int d = rank - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      ++idx[ud];
      ia += sa[ud];
      ib += sb[ud];
      if (idx[ud] < out[ud]) break;
      idx[ud] = 0;
      ia -= sa[ud] * out[ud];
      ib -= sb[ud] * out[ud];
    }
  }
}

enum class BinOp { kAdd, kSub, kMul };

template <typename T>
static Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinOp op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto pa = a.node_ptr();
  auto pb = b.node_ptr();

  if (sa == sb) {  // fast path, also keeps the identity cases bit-exact
    const std::int64_t n = a.numel();
    std::vector<T> out(static_cast<std::size_t>(n));
    const T* av = pa->value.data();
    const T* bv = pb->value.data();
    switch (op) {
      case BinOp::kAdd: for (std::int64_t i = 0; i < n; ++i) out[i] = av[i] + bv[i]; break;
      case BinOp::kSub: for (std::int64_t i = 0; i < n; ++i) out[i] = av[i] - bv[i]; break;
      case BinOp::kMul: for (std::int64_t i = 0; i < n; ++i) out[i] = av[i] * bv[i]; break;
    }
    return make_op<T>(sa, std::move(out), {pa, pb}, [pa, pb, op](TensorNode<T>& self) {
      const std::int64_t m = self.numel();
      const T* g = self.grad.data();
      if (pa->requires_grad) {
        T* da = pa->grad.data();
        if (op == BinOp::kMul) {
          const T* bv = pb->value.data();
          for (std::int64_t i = 0; i < m; ++i) da[i] += g[i] * bv[i];
        } else {
          for (std::int64_t i = 0; i < m; ++i) da[i] += g[i];
        }
      }
      if (pb->requires_grad) {
        T* db = pb->grad.data();
        switch (op) {
          case BinOp::kAdd: for (std::int64_t i = 0; i < m; ++i) db[i] += g[i]; break;
          case BinOp::kSub: for (std::int64_t i = 0; i < m; ++i) db[i] -= g[i]; break;
          case BinOp::kMul: {
            const T* av = pa->value.data();
            for (std::int64_t i = 0; i < m; ++i) db[i] += g[i] * av[i];
            break;
          }
        }
      }
    });
  }

  const Shape out_shape = broadcast_shape(sa, sb);
  const auto stra = broadcast_strides(sa, out_shape);
  const auto strb = broadcast_strides(sb, out_shape);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const T* av = pa->value.data();
  const T* bv = pb->value.data();
  for_each_broadcast(out_shape, stra, strb, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
    switch (op) {
      case BinOp::kAdd: out[static_cast<std::size_t>(io)] = av[ia] + bv[ib]; break;
      case BinOp::kSub: out[static_cast<std::size_t>(io)] = av[ia] - bv[ib]; break;
      case BinOp::kMul: out[static_cast<std::size_t>(io)] = av[ia] * bv[ib]; break;
    }
  });
  return make_op<T>(out_shape, std::move(out), {pa, pb},
                    [pa, pb, op, out_shape, stra, strb](TensorNode<T>& self) {
    const T* g = self.grad.data();
    const T* av = pa->value.data();
    const T* bv = pb->value.data();
    T* da = pa->requires_grad ? pa->grad.data() : nullptr;
    T* db = pb->requires_grad ? pb->grad.data() : nullptr;
    for_each_broadcast(out_shape, stra, strb, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
      const T gv = g[io];
      switch (op) {
        case BinOp::kAdd:
          if (da) da[ia] += gv;
          if (db) db[ib] += gv;
          break;
        case BinOp::kSub:
          if (da) da[ia] += gv;
          if (db) db[ib] -= gv;
          break;
        case BinOp::kMul:
          if (da) da[ia] += gv * bv[ib];
          if (db) db[ib] += gv * av[ia];
          break;
      }
    });
  });
}

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinOp::kAdd); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinOp::kSub); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinOp::kMul); }

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto pa = a.node_ptr();
  const std::int64_t n = a.numel();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa->value[i] * s;
  return make_op<T>(a.shape(), std::move(out), {pa}, [pa, s](TensorNode<T>& self) {
    if (!pa->requires_grad) return;
    T* da = pa->grad.data();
    const T* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) da[i] += g[i] * s;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto pa = a.node_ptr();
  const std::int64_t n = a.numel();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa->value[i] > T(0) ? pa->value[i] : T(0);
  return make_op<T>(a.shape(), std::move(out), {pa}, [pa](TensorNode<T>& self) {
    if (!pa->requires_grad) return;
    T* da = pa->grad.data();
    const T* g = self.grad.data();
    const T* av = pa->value.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) {
      if (av[i] > T(0)) da[i] += g[i];
    }
  });
}

template <typename T>
static T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto pa = a.node_ptr();
  const std::int64_t n = a.numel();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = stable_sigmoid(pa->value[i]);
  std::vector<T> saved = out;  // s(1-s) needs the activation
  return make_op<T>(a.shape(), std::move(out), {pa}, [pa, saved = std::move(saved)](TensorNode<T>& self) {
    if (!pa->requires_grad) return;
    T* da = pa->grad.data();
    const T* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) {
      const T s = saved[static_cast<std::size_t>(i)];
      da[i] += g[i] * s * (T(1) - s);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto pa = a.node_ptr();
  double acc = 0;
  for (const T v : pa->value) acc += static_cast<double>(v);
  return make_op<T>({1}, {static_cast<T>(acc)}, {pa}, [pa](TensorNode<T>& self) {
    if (!pa->requires_grad) return;
    const T g = self.grad[0];
    for (auto& d : pa->grad) d += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  auto pa = a.node_ptr();
  const std::int64_t n = a.numel();
  double acc = 0;
  for (const T v : pa->value) acc += static_cast<double>(v);
  return make_op<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {pa},
                    [pa, n](TensorNode<T>& self) {
    if (!pa->requires_grad) return;
    const T g = self.grad[0] / static_cast<T>(n);
    for (auto& d : pa->grad) d += g;
  });
}

// ---------------------------------------------------------------------------
// Convolution

// First/last output column whose tap ow*stride - padding + k lies in [0, w).
static std::pair<int, int> col_range(int out_extent, int in_extent, int stride, int padding, int k) {
  const int q = padding - k;
  int lo = q <= 0 ? 0 : (q + stride - 1) / stride;
  const int top = in_extent - 1 + padding - k;
  int hi = top < 0 ? 0 : std::min(out_extent, top / stride + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int padding) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw std::invalid_argument("conv2d: expected 4-d input and kernel, got " +
                                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Cin) {
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) +
                                " vs kernel " + shape_str(w.shape()));
  }
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;
  if (H + 2 * padding - kh < 0 || W + 2 * padding - kw < 0 || OH < 1 || OW < 1) {
    throw std::invalid_argument("conv2d: non-positive output extent");
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != Cout)) {
    throw std::invalid_argument("conv2d: bias must have shape [" + std::to_string(Cout) + "]");
  }

  auto px = x.node_ptr();
  auto pw = w.node_ptr();
  auto pb = b.defined() ? b.node_ptr() : nullptr;

  std::vector<T> out(static_cast<std::size_t>(N) * Cout * OH * OW, T(0));
  const T* xv = px->value.data();
  const T* wv = pw->value.data();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      T* oplane = out.data() + (static_cast<std::int64_t>(n) * Cout + co) * OH * OW;
      if (pb) {
        const T bias = pb->value[static_cast<std::size_t>(co)];
        std::fill(oplane, oplane + static_cast<std::int64_t>(OH) * OW, bias);
      }
      for (int ci = 0; ci < Cin; ++ci) {
        const T* xplane = xv + (static_cast<std::int64_t>(n) * Cin + ci) * H * W;
        for (int r = 0; r < kh; ++r) {
          for (int c = 0; c < kw; ++c) {
            const T wgt = wv[((static_cast<std::int64_t>(co) * Cin + ci) * kh + r) * kw + c];
            const auto [lo, hi] = col_range(OW, W, stride, padding, c);
            for (int oh = 0; oh < OH; ++oh) {
              const int ih = oh * stride - padding + r;
              if (ih < 0 || ih >= H) continue;
              const T* xrow = xplane + static_cast<std::int64_t>(ih) * W - padding + c;
              T* orow = oplane + static_cast<std::int64_t>(oh) * OW;
              for (int ow = lo; ow < hi; ++ow) orow[ow] += wgt * xrow[ow * stride];
            }
          }
        }
      }
    }
  }

  Shape out_shape{N, Cout, OH, OW};
  const int s = stride, p = padding;
  return make_op<T>(std::move(out_shape), std::move(out), {px, pw, pb},
                    [px, pw, pb, N, Cin, Cout, H, W, kh, kw, OH, OW, s, p](TensorNode<T>& self) {
    const T* g = self.grad.data();
    const T* xv = px->value.data();
    const T* wv = pw->value.data();
    T* dx = px->requires_grad ? px->grad.data() : nullptr;
    T* dw = pw->requires_grad ? pw->grad.data() : nullptr;
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Cout; ++co) {
        const T* gplane = g + (static_cast<std::int64_t>(n) * Cout + co) * OH * OW;
        if (pb && pb->requires_grad) {
          double acc = 0;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) acc += gplane[i];
          pb->grad[static_cast<std::size_t>(co)] += static_cast<T>(acc);
        }
        if (!dx && !dw) continue;
        for (int ci = 0; ci < Cin; ++ci) {
          const T* xplane = xv + (static_cast<std::int64_t>(n) * Cin + ci) * H * W;
          T* dxplane = dx ? dx + (static_cast<std::int64_t>(n) * Cin + ci) * H * W : nullptr;
          for (int r = 0; r < kh; ++r) {
            for (int c = 0; c < kw; ++c) {
              const std::int64_t widx = ((static_cast<std::int64_t>(co) * Cin + ci) * kh + r) * kw + c;
              const T wgt = wv[widx];
              const auto [lo, hi] = col_range(OW, W, s, p, c);
              T wacc = T(0);
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * s - p + r;
                if (ih < 0 || ih >= H) continue;
                const std::int64_t xoff = static_cast<std::int64_t>(ih) * W - p + c;
                const T* grow = gplane + static_cast<std::int64_t>(oh) * OW;
                if (dx) {
                  for (int ow = lo; ow < hi; ++ow) dxplane[xoff + ow * s] += wgt * grow[ow];
                }
                if (dw) {
                  for (int ow = lo; ow < hi; ++ow) wacc += grow[ow] * xplane[xoff + ow * s];
                }
              }
              if (dw) dw[widx] += wacc;
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride, int padding) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw std::invalid_argument("conv_transpose2d: expected 4-d input and kernel");
  }
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv_transpose2d: bad stride/padding");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(0) != Cin) {
    throw std::invalid_argument("conv_transpose2d: channel mismatch, input " + shape_str(x.shape()) +
                                " vs kernel " + shape_str(w.shape()));
  }
  const int OH = (H - 1) * stride - 2 * padding + kh;
  const int OW = (W - 1) * stride - 2 * padding + kw;
  if (OH < 1 || OW < 1) throw std::invalid_argument("conv_transpose2d: non-positive output extent");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != Cout)) {
    throw std::invalid_argument("conv_transpose2d: bias must have shape [" + std::to_string(Cout) + "]");
  }

  auto px = x.node_ptr();
  auto pw = w.node_ptr();
  auto pb = b.defined() ? b.node_ptr() : nullptr;

  std::vector<T> out(static_cast<std::size_t>(N) * Cout * OH * OW, T(0));
  const T* xv = px->value.data();
  const T* wv = pw->value.data();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      T* oplane = out.data() + (static_cast<std::int64_t>(n) * Cout + co) * OH * OW;
      if (pb) {
        const T bias = pb->value[static_cast<std::size_t>(co)];
        std::fill(oplane, oplane + static_cast<std::int64_t>(OH) * OW, bias);
      }
      for (int ci = 0; ci < Cin; ++ci) {
        const T* xplane = xv + (static_cast<std::int64_t>(n) * Cin + ci) * H * W;
        for (int r = 0; r < kh; ++r) {
          for (int c = 0; c < kw; ++c) {
            const T wgt = wv[((static_cast<std::int64_t>(ci) * Cout + co) * kh + r) * kw + c];
            // scatter: out[ih*s - p + r][iw*s - p + c] += x[ih][iw] * w
            const auto [ilo, ihi] = col_range(W, OW, stride, padding, c);
            for (int ih = 0; ih < H; ++ih) {
              const int oh = ih * stride - padding + r;
              if (oh < 0 || oh >= OH) continue;
              const T* xrow = xplane + static_cast<std::int64_t>(ih) * W;
              T* orow = oplane + static_cast<std::int64_t>(oh) * OW - padding + c;
              for (int iw = ilo; iw < ihi; ++iw) orow[iw * stride] += wgt * xrow[iw];
            }
          }
        }
      }
    }
  }

  Shape out_shape{N, Cout, OH, OW};
  const int s = stride, p = padding;
  return make_op<T>(std::move(out_shape), std::move(out), {px, pw, pb},
                    [px, pw, pb, N, Cin, Cout, H, W, kh, kw, OH, OW, s, p](TensorNode<T>& self) {
    const T* g = self.grad.data();
    const T* xv = px->value.data();
    const T* wv = pw->value.data();
    T* dx = px->requires_grad ? px->grad.data() : nullptr;
    T* dw = pw->requires_grad ? pw->grad.data() : nullptr;
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Cout; ++co) {
        const T* gplane = g + (static_cast<std::int64_t>(n) * Cout + co) * OH * OW;
        if (pb && pb->requires_grad) {
          double acc = 0;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) acc += gplane[i];
          pb->grad[static_cast<std::size_t>(co)] += static_cast<T>(acc);
        }
        if (!dx && !dw) continue;
        for (int ci = 0; ci < Cin; ++ci) {
          const T* xplane = xv + (static_cast<std::int64_t>(n) * Cin + ci) * H * W;
          T* dxplane = dx ? dx + (static_cast<std::int64_t>(n) * Cin + ci) * H * W : nullptr;
          for (int r = 0; r < kh; ++r) {
            for (int c = 0; c < kw; ++c) {
              const std::int64_t widx = ((static_cast<std::int64_t>(ci) * Cout + co) * kh + r) * kw + c;
              const T wgt = wv[widx];
              const auto [ilo, ihi] = col_range(W, OW, s, p, c);
              T wacc = T(0);
              for (int ih = 0; ih < H; ++ih) {
                const int oh = ih * s - p + r;
                if (oh < 0 || oh >= OH) continue;
                const T* grow = gplane + static_cast<std::int64_t>(oh) * OW - p + c;
                const T* xrow = xplane + static_cast<std::int64_t>(ih) * W;
                if (dx) {
                  T* dxrow = dxplane + static_cast<std::int64_t>(ih) * W;
                  for (int iw = ilo; iw < ihi; ++iw) dxrow[iw] += wgt * grow[iw * s];
                }
                if (dw) {
                  for (int iw = ilo; iw < ihi; ++iw) wacc += xrow[iw] * grow[iw * s];
                }
              }
              if (dw) dw[widx] += wacc;
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Batch norm

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BnRunningStats<T>& stats, BnMode mode, T eps, T momentum) {
  if (x.rank() != 4) throw std::invalid_argument("batch_norm2d: expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C) {
    throw std::invalid_argument("batch_norm2d: gamma/beta must have shape [" + std::to_string(C) + "]");
  }
  const std::int64_t M = static_cast<std::int64_t>(N) * H * W;
  if (mode == BnMode::kTrain && M < 2) {
    throw std::invalid_argument("batch_norm2d: train mode needs at least 2 values per channel");
  }
  if (stats.mean.empty()) stats.reset(C);
  if (stats.mean.size() != static_cast<std::size_t>(C) || stats.var.size() != static_cast<std::size_t>(C)) {
    throw std::invalid_argument("batch_norm2d: running stats sized for " +
                                std::to_string(stats.mean.size()) + " channels, input has " +
                                std::to_string(C));
  }
  if (mode == BnMode::kEval && !stats.initialized) {
    throw std::runtime_error("batch_norm2d: eval mode before any running stats exist");
  }

  auto px = x.node_ptr();
  auto pg = gamma.node_ptr();
  auto pbta = beta.node_ptr();
  const T* xv = px->value.data();

  std::vector<T> mu(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  if (mode == BnMode::kTrain) {
    for (int c = 0; c < C; ++c) {
      double s1 = 0, s2 = 0;
      for (int n = 0; n < N; ++n) {
        const T* xp = xv + (static_cast<std::int64_t>(n) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double v = xp[i];
          s1 += v;
          s2 += v * v;
        }
      }
      const double m = s1 / static_cast<double>(M);
      double var = s2 / static_cast<double>(M) - m * m;  // biased
      if (var < 0) var = 0;
      mu[static_cast<std::size_t>(c)] = static_cast<T>(m);
      inv_std[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      auto& rm = stats.mean[static_cast<std::size_t>(c)];
      auto& rv = stats.var[static_cast<std::size_t>(c)];
      rm = (T(1) - momentum) * rm + momentum * static_cast<T>(m);
      rv = (T(1) - momentum) * rv + momentum * static_cast<T>(var);
    }
    stats.initialized = true;
  } else {
    for (int c = 0; c < C; ++c) {
      mu[static_cast<std::size_t>(c)] = stats.mean[static_cast<std::size_t>(c)];
      inv_std[static_cast<std::size_t>(c)] =
          static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.var[static_cast<std::size_t>(c)]) +
                                         static_cast<double>(eps)));
    }
  }

  std::vector<T> out(px->value.size());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T m = mu[static_cast<std::size_t>(c)];
      const T is = inv_std[static_cast<std::size_t>(c)];
      const T gm = pg->value[static_cast<std::size_t>(c)];
      const T bt = pbta->value[static_cast<std::size_t>(c)];
      const T* xp = xv + (static_cast<std::int64_t>(n) * C + c) * plane;
      T* op = out.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) op[i] = gm * ((xp[i] - m) * is) + bt;
    }
  }

  const bool train = mode == BnMode::kTrain;
  return make_op<T>(x.shape(), std::move(out), {px, pg, pbta},
                    [px, pg, pbta, mu = std::move(mu), inv_std = std::move(inv_std),
                     N, C, plane, M, train](TensorNode<T>& self) {
    const T* g = self.grad.data();
    const T* xv = px->value.data();
    for (int c = 0; c < C; ++c) {
      const T m = mu[static_cast<std::size_t>(c)];
      const T is = inv_std[static_cast<std::size_t>(c)];
      const T gm = pg->value[static_cast<std::size_t>(c)];
      double s1 = 0, s2 = 0;  // sum g, sum g*xhat
      for (int n = 0; n < N; ++n) {
        const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double gv = g[off + i];
          s1 += gv;
          s2 += gv * static_cast<double>((xv[off + i] - m) * is);
        }
      }
      if (pg->requires_grad) pg->grad[static_cast<std::size_t>(c)] += static_cast<T>(s2);
      if (pbta->requires_grad) pbta->grad[static_cast<std::size_t>(c)] += static_cast<T>(s1);
      if (!px->requires_grad) continue;
      T* dx = px->grad.data();
      if (train) {
        const T a1 = static_cast<T>(s1 / static_cast<double>(M));
        const T a2 = static_cast<T>(s2 / static_cast<double>(M));
        for (int n = 0; n < N; ++n) {
          const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const T xhat = (xv[off + i] - m) * is;
            dx[off + i] += gm * is * (g[off + i] - a1 - xhat * a2);
          }
        }
      } else {
        for (int n = 0; n < N; ++n) {
          const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) dx[off + i] += g[off + i] * gm * is;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
Tensor<T> max_pool_3x3s2(const Tensor<T>& x) {
  if (x.rank() != 4) throw std::invalid_argument("max_pool_3x3s2: expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < 1 || W < 1) throw std::invalid_argument("max_pool_3x3s2: empty spatial extent");
  const int OH = (H - 1) / 2 + 1;
  const int OW = (W - 1) / 2 + 1;

  auto px = x.node_ptr();
  const T* xv = px->value.data();
  std::vector<T> out(static_cast<std::size_t>(N) * C * OH * OW);
  std::vector<std::int64_t> argmax(out.size());
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow, ++o) {
          bool first = true;
          T best = T(0);
          std::int64_t best_idx = -1;
          for (int r = 0; r < 3; ++r) {
            const int ih = oh * 2 - 1 + r;
            if (ih < 0 || ih >= H) continue;
            for (int cc = 0; cc < 3; ++cc) {
              const int iw = ow * 2 - 1 + cc;
              if (iw < 0 || iw >= W) continue;
              const std::int64_t idx = base + static_cast<std::int64_t>(ih) * W + iw;
              // strict > keeps the first (row-major) maximum on ties
              if (first || xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
                first = false;
              }
            }
          }
          out[static_cast<std::size_t>(o)] = best;
          argmax[static_cast<std::size_t>(o)] = best_idx;
        }
      }
    }
  }

  return make_op<T>({N, C, OH, OW}, std::move(out), {px},
                    [px, argmax = std::move(argmax)](TensorNode<T>& self) {
    if (!px->requires_grad) return;
    T* dx = px->grad.data();
    const T* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) dx[argmax[static_cast<std::size_t>(i)]] += g[i];
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < 1 || W < 1) throw std::invalid_argument("global_avg_pool: empty spatial extent");
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;

  auto px = x.node_ptr();
  const T* xv = px->value.data();
  std::vector<T> out(static_cast<std::size_t>(N) * C);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* xp = xv + (static_cast<std::int64_t>(n) * C + c) * plane;
      double acc = 0;
      for (std::int64_t i = 0; i < plane; ++i) acc += xp[i];
      out[static_cast<std::size_t>(n) * C + c] = static_cast<T>(acc / static_cast<double>(plane));
    }
  }

  return make_op<T>({N, C, 1, 1}, std::move(out), {px}, [px, plane](TensorNode<T>& self) {
    if (!px->requires_grad) return;
    T* dx = px->grad.data();
    const T* g = self.grad.data();
    const T inv = T(1) / static_cast<T>(plane);
    for (std::int64_t j = 0; j < self.numel(); ++j) {
      const T gv = g[j] * inv;
      T* dxp = dx + j * plane;
      for (std::int64_t i = 0; i < plane; ++i) dxp[i] += gv;
    }
  });
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
Tape<T> Tape<T>::trace(const Tensor<T>& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (root.numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad() || root.node()->is_leaf()) {
    throw std::invalid_argument("backward: root is detached from the tape");
  }

  Tape<T> tape;
  tape.root_ = root.node_ptr();
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  visited.insert(root.node());
  stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* parent = node->parents[next].get();
      ++next;
      if (parent && parent->requires_grad && !visited.contains(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <typename T>
void Tape<T>::backward() {
  // Non-leaf grads are scratch for this traversal; leaves accumulate.
  for (TensorNode<T>* n : order_) {
    if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), T(0));
  }
  root_->grad[0] += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

template <typename T>
void Tensor<T>::backward() const {
  Tape<T>::trace(*this).backward();
}

// ---------------------------------------------------------------------------
// Instantiations

#define ACNET_INSTANTIATE_TENSOR(T)                                                        \
  template class Tensor<T>;                                                                \
  template class Tape<T>;                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> relu(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                  BnRunningStats<T>&, BnMode, T, T);                       \
  template Tensor<T> max_pool_3x3s2(const Tensor<T>&);                                     \
  template Tensor<T> global_avg_pool(const Tensor<T>&);

ACNET_INSTANTIATE_TENSOR(float)
ACNET_INSTANTIATE_TENSOR(double)

#undef ACNET_INSTANTIATE_TENSOR

}  // namespace acnet
