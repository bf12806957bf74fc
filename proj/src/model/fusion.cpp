#include "tfz/model/fusion.hpp"

namespace tfz {

std::string_view method_name(FusionMethod m) {
  switch (m) {
    case FusionMethod::Baseline: return "baseline";
    case FusionMethod::PreEncoderChannelMerge: return "pre-encoder";
    case FusionMethod::PostPoolPLLaVA: return "pllava";
    case FusionMethod::PostMLPKangaroo: return "kangaroo";
    case FusionMethod::PostQFormer: return "qformer";
    case FusionMethod::ThroughEncoder: return "te-fusion";
  }
  return "?";
}

std::optional<FusionMethod> parse_method(std::string_view name) {
  for (FusionMethod m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

}  // namespace tfz
