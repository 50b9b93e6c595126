#include "acnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "acnet/rng.hpp"

namespace acnet {

GradCheckResult check_gradients(const std::string& name, std::vector<TensorD> inputs,
                                const BuildFn& build, double h, double rel_tol, double abs_tol,
                                double tiny) {
  GradCheckResult res;
  res.name = name;
  res.passed = true;

  for (auto& t : inputs) t.zero_grad();
  build(inputs).backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& buf = inputs[ti].node()->value;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double keep = buf[i];
      buf[i] = keep + h;
      const double up = build(inputs).item();
      buf[i] = keep - h;
      const double dn = build(inputs).item();
      buf[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = analytic[ti][i];
      ++res.checked;
      if (std::abs(an) >= tiny || std::abs(fd) >= tiny) {
        const double rel = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
        res.max_rel_err = std::max(res.max_rel_err, rel);
        if (rel >= rel_tol) res.passed = false;
      } else {
        const double abs_err = std::abs(an - fd);
        res.max_abs_err = std::max(res.max_abs_err, abs_err);
        if (abs_err >= abs_tol) res.passed = false;
      }
    }
  }
  return res;
}

namespace {

TensorD rand_leaf(Shape s, Rng& r, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(s)));
  for (auto& x : v) x = r.uniform(lo, hi);
  return TensorD::from_data(std::move(s), std::move(v), true);
}

// Inputs feeding relu must sit away from the kink or the two-sided difference
// straddles it and disagrees with the one-sided derivative.
void bump_from_zero(TensorD& t, double margin = 0.02, double push = 0.1) {
  for (auto& v : t.node()->value) {
    if (std::abs(v) < margin) v += v >= 0 ? push : -push;
  }
}

// Max pools differentiate only when the argmax is stable under the probe step;
// enforce a minimum separation between all values.
TensorD rand_separated(Shape s, Rng& r, double min_gap = 1e-4) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    TensorD t = rand_leaf(s, r);
    std::vector<double> sorted(t.data().begin(), t.data().end());
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i] - sorted[i - 1] < min_gap) {
        ok = false;
        break;
      }
    }
    if (ok) return t;
  }
  throw std::runtime_error("gradcheck: could not draw well-separated pool input");
}

TensorD project(const TensorD& y, const TensorD& proj) { return sum(mul(y, proj)); }

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int seeds_per_op) {
  std::vector<GradCheckResult> out;

  for (int s = 0; s < seeds_per_op; ++s) {
    const auto tag = [&](const char* op) { return std::string(op) + "/seed" + std::to_string(s); };
    Rng r(mix_seed(seed, static_cast<std::uint64_t>(s)));

    {
      auto a = rand_leaf({2, 3, 4}, r);
      auto b = rand_leaf({2, 3, 4}, r);
      auto proj = rand_leaf({2, 3, 4}, r).clone_detached();
      out.push_back(check_gradients(tag("add"), {a, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(add(in[0], in[1]), proj);
                                    }));
      out.push_back(check_gradients(tag("sub"), {a, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(sub(in[0], in[1]), proj);
                                    }));
      out.push_back(check_gradients(tag("mul"), {a, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(mul(in[0], in[1]), proj);
                                    }));
    }
    {
      auto a = rand_leaf({2, 3, 1, 5}, r);
      auto b = rand_leaf({2, 1, 4, 5}, r);
      auto proj = rand_leaf({2, 3, 4, 5}, r).clone_detached();
      out.push_back(check_gradients(tag("add_broadcast"), {a, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(add(in[0], in[1]), proj);
                                    }));
      out.push_back(check_gradients(tag("mul_broadcast"), {a, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(mul(in[0], in[1]), proj);
                                    }));
    }
    {
      auto a = rand_leaf({3, 7}, r);
      auto proj = rand_leaf({3, 7}, r).clone_detached();
      out.push_back(check_gradients(tag("scale"), {a},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(scale(in[0], -1.7), proj);
                                    }));
      out.push_back(check_gradients(tag("sigmoid"), {a},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(sigmoid(in[0]), proj);
                                    }));
      out.push_back(check_gradients(tag("sum"), {a}, [](const std::vector<TensorD>& in) {
        return sum(in[0]);
      }));
      out.push_back(check_gradients(tag("mean"), {a}, [](const std::vector<TensorD>& in) {
        return mean(in[0]);
      }));
    }
    {
      auto a = rand_leaf({3, 7}, r);
      bump_from_zero(a);
      auto proj = rand_leaf({3, 7}, r).clone_detached();
      out.push_back(check_gradients(tag("relu"), {a},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(relu(in[0]), proj);
                                    }));
    }
    {
      auto x = rand_leaf({2, 2, 5, 4}, r);
      auto w = rand_leaf({3, 2, 3, 3}, r);
      auto b = rand_leaf({3}, r);
      auto proj = rand_leaf(conv2d(x, w, b, 2, 1).shape(), r).clone_detached();
      out.push_back(check_gradients(tag("conv2d_s2p1"), {x, w, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(conv2d(in[0], in[1], in[2], 2, 1), proj);
                                    }));
      auto proj2 = rand_leaf(conv2d(x, w, TensorD{}, 1, 0).shape(), r).clone_detached();
      out.push_back(check_gradients(tag("conv2d_s1p0_nobias"), {x, w},
                                    [proj2](const std::vector<TensorD>& in) {
                                      return project(conv2d(in[0], in[1], TensorD{}, 1, 0), proj2);
                                    }));
    }
    {
      auto x = rand_leaf({1, 3, 3, 4}, r);
      auto w = rand_leaf({3, 2, 2, 2}, r);
      auto b = rand_leaf({2}, r);
      auto proj = rand_leaf(conv_transpose2d(x, w, b, 2, 0).shape(), r).clone_detached();
      out.push_back(check_gradients(tag("tconv_s2p0"), {x, w, b},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(conv_transpose2d(in[0], in[1], in[2], 2, 0), proj);
                                    }));
      auto w3 = rand_leaf({3, 2, 3, 3}, r);
      auto proj2 = rand_leaf(conv_transpose2d(x, w3, TensorD{}, 2, 1).shape(), r).clone_detached();
      out.push_back(check_gradients(tag("tconv_s2p1_nobias"), {x, w3},
                                    [proj2](const std::vector<TensorD>& in) {
                                      return project(conv_transpose2d(in[0], in[1], TensorD{}, 2, 1), proj2);
                                    }));
    }
    {
      auto x = rand_leaf({2, 2, 3, 4}, r);
      auto gamma = rand_leaf({2}, r, 0.5, 1.5);
      auto beta = rand_leaf({2}, r, -0.5, 0.5);
      auto proj = rand_leaf({2, 2, 3, 4}, r).clone_detached();
      out.push_back(check_gradients(tag("batch_norm_train"), {x, gamma, beta},
                                    [proj](const std::vector<TensorD>& in) {
                                      BnRunningStats<double> stats;
                                      stats.reset(in[0].dim(1));
                                      auto y = batch_norm2d(in[0], in[1], in[2], stats, BnMode::kTrain);
                                      return project(y, proj);
                                    }));

      auto warm = rand_leaf({2, 2, 4, 4}, r);
      auto stats = std::make_shared<BnRunningStats<double>>();
      stats->reset(2);
      batch_norm2d(warm, gamma, beta, *stats, BnMode::kTrain);
      out.push_back(check_gradients(tag("batch_norm_eval"), {x, gamma, beta},
                                    [proj, stats](const std::vector<TensorD>& in) {
                                      auto y = batch_norm2d(in[0], in[1], in[2], *stats, BnMode::kEval);
                                      return project(y, proj);
                                    }));
    }
    {
      auto x = rand_separated({1, 2, 6, 6}, r);
      auto proj = rand_leaf(max_pool_3x3s2(x).shape(), r).clone_detached();
      out.push_back(check_gradients(tag("max_pool"), {x},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(max_pool_3x3s2(in[0]), proj);
                                    }));
    }
    {
      auto x = rand_leaf({2, 3, 5, 5}, r);
      auto proj = rand_leaf({2, 3, 1, 1}, r).clone_detached();
      out.push_back(check_gradients(tag("global_avg_pool"), {x},
                                    [proj](const std::vector<TensorD>& in) {
                                      return project(global_avg_pool(in[0]), proj);
                                    }));
    }
    {
      // chain touching most ops at once: conv -> bn -> relu -> pool -> gap
      auto x = rand_leaf({2, 2, 8, 8}, r);
      auto w = rand_leaf({3, 2, 3, 3}, r);
      auto gamma = rand_leaf({3}, r, 0.5, 1.5);
      auto beta = rand_leaf({3}, r, -0.5, 0.5);
      auto proj = rand_leaf({2, 3, 1, 1}, r).clone_detached();
      out.push_back(check_gradients(
          tag("composite_chain"), {x, w, gamma, beta},
          [proj](const std::vector<TensorD>& in) {
            BnRunningStats<double> stats;
            stats.reset(in[1].dim(0));
            auto y = conv2d(in[0], in[1], TensorD{}, 1, 1);
            y = batch_norm2d(y, in[2], in[3], stats, BnMode::kTrain);
            y = relu(y);
            y = max_pool_3x3s2(y);
            y = global_avg_pool(y);
            return project(y, proj);
          },
          1e-6, 1e-4, 1e-7));  // relu kinks inside the chain soften the bound
    }
  }
  return out;
}

}  // namespace acnet
