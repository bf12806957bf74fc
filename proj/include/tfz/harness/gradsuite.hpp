#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tfz/numerics/gradcheck.hpp"

namespace tfz {

/// Groups of gradient cases, in run order. "model" holds the end-to-end
/// composites (frontend, encoder, compressor and decoder in one loss).
inline constexpr std::string_view kGradModules[] = {"ops", "frontend", "encoder", "compressor", "decoder", "model"};

struct GradCaseResult {
  std::string module;
  std::string name;
  double tol = 0.0;
  GradCheckReport report;

  bool pass() const { return report.pass; }
};

/// Central-difference checks (step 1e-5): op-level cases at rel-err 1e-6,
/// composites at 1e-4. An empty `module` runs everything; an unknown one
/// throws InvalidArgument.
std::vector<GradCaseResult> run_gradient_suite(std::string_view module = {});

}  // namespace tfz
