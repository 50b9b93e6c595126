#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acnet/tensor.hpp"

namespace acnet {

struct GradCheckResult {
  std::string name;
  bool passed = false;
  int checked = 0;         // entries compared
  double max_rel_err = 0;  // worst relative error among non-tiny entries
  double max_abs_err = 0;  // worst absolute error among tiny entries
};

// Rebuilds a scalar loss from the current values of `inputs`. Must be a pure
// function of those values so finite differencing is meaningful.
using BuildFn = std::function<TensorD(const std::vector<TensorD>&)>;

// Compares reverse-mode gradients of `build` against central differences.
// An entry passes if its relative error is below rel_tol when either side
// exceeds `tiny`, and its absolute error is below abs_tol otherwise.
GradCheckResult check_gradients(const std::string& name, std::vector<TensorD> inputs,
                                const BuildFn& build, double h = 1e-6, double rel_tol = 1e-5,
                                double abs_tol = 1e-8, double tiny = 1e-6);

// Sweeps every differentiable op (elementwise, reductions, convolutions,
// batch norm in both modes, pooling, and a composite chain) over several
// random seeds. One result per op+seed combination.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int seeds_per_op = 5);

}  // namespace acnet
