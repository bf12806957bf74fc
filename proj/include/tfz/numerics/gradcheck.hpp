#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tfz/numerics/params.hpp"

namespace tfz {

/// |a - b| / max(|a|, |b|, 1e-8)
double rel_err(double a, double b);

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t coordinates = 0;
  std::string worst;  // "<param>[<flat index>]" of the largest error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Builds a scalar loss on the tape from one leaf per parameter tensor.
using TensorLossFn = std::function<Var(Tape&, std::span<const Var>)>;
/// Builds a scalar loss from named parameters.
using ParamLossFn = std::function<Var(ParamBinding&)>;

/// Central differences (f(p+h) - f(p-h)) / 2h per coordinate. Evaluates f
/// forward only; never touches the backward pass.
std::vector<Tensor> central_differences(const TensorLossFn& f, const std::vector<Tensor>& params, double step);

/// Compares tape gradients with central differences over every coordinate.
GradCheckReport finite_diff_check(const TensorLossFn& f, const std::vector<Tensor>& params, double step, double tol);
GradCheckReport finite_diff_check(const ParamLossFn& f, const ParamSet& params, double step, double tol);

}  // namespace tfz
