#include "tfz/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tfz/errors.hpp"

namespace tfz {

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

namespace {

double evaluate(const TensorLossFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p, false));
  return f(tape, leaves).value().item();
}

}  // namespace

std::vector<Tensor> central_differences(const TensorLossFn& f, const std::vector<Tensor>& params, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be positive");
  std::vector<Tensor> work = params;
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t t = 0; t < work.size(); ++t) {
    Tensor g(work[t].shape());
    for (std::size_t i = 0; i < work[t].size(); ++i) {
      const double orig = work[t][i];
      work[t][i] = orig + step;
      const double up = evaluate(f, work);
      work[t][i] = orig - step;
      const double down = evaluate(f, work);
      work[t][i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

GradCheckReport finite_diff_check(const TensorLossFn& f, const std::vector<Tensor>& params, double step, double tol) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
    Var loss = f(tape, leaves);
    Gradients g = backward(tape, loss);
    for (const Var& v : leaves) analytic.push_back(g[v]);
  }
  const std::vector<Tensor> numeric = central_differences(f, params, step);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double e = rel_err(analytic[t][i], numeric[t][i]);
      ++report.coordinates;
      if (e > report.max_rel_err || report.worst.empty()) {
        report.max_rel_err = std::max(report.max_rel_err, e);
        report.worst = "param" + std::to_string(t) + "[" + std::to_string(i) + "]";
        report.worst_analytic = analytic[t][i];
        report.worst_numeric = numeric[t][i];
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

GradCheckReport finite_diff_check(const ParamLossFn& f, const ParamSet& params, double step, double tol) {
  std::vector<Tensor> values;
  for (std::size_t i = 0; i < params.size(); ++i) values.push_back(params.value(i));
  const auto& names = params.names();
  TensorLossFn direct = [&](Tape& tape, std::span<const Var> leaves) {
    // Hand out exactly the leaves the checker perturbs.
    ParamBinding binding(tape, params, false);
    for (std::size_t i = 0; i < leaves.size(); ++i) binding.bind(names[i], leaves[i]);
    return f(binding);
  };
  GradCheckReport r = finite_diff_check(direct, values, step, tol);
  if (!r.worst.empty()) {
    const auto lb = r.worst.find('[');
    const std::size_t t = std::stoul(r.worst.substr(5, lb - 5));
    r.worst = names[t] + r.worst.substr(lb);
  }
  return r;
}

}  // namespace tfz
