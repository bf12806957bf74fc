#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace tfz {

enum class FusionMethod {
  Baseline,
  PreEncoderChannelMerge,
  PostPoolPLLaVA,
  PostMLPKangaroo,
  PostQFormer,
  ThroughEncoder,
};

inline constexpr std::array<FusionMethod, 6> kAllMethods = {
    FusionMethod::Baseline,        FusionMethod::PreEncoderChannelMerge, FusionMethod::PostPoolPLLaVA,
    FusionMethod::PostMLPKangaroo, FusionMethod::PostQFormer,            FusionMethod::ThroughEncoder,
};

/// The methods that compress temporally (everything except Baseline).
inline constexpr std::array<FusionMethod, 5> kCompressingMethods = {
    FusionMethod::PreEncoderChannelMerge, FusionMethod::PostPoolPLLaVA, FusionMethod::PostMLPKangaroo,
    FusionMethod::PostQFormer,            FusionMethod::ThroughEncoder,
};

/// Stable identifier used in CSV files and on the command line.
std::string_view method_name(FusionMethod m);
std::optional<FusionMethod> parse_method(std::string_view name);

enum class EncoderScope { PerFrame, PerGroup };

/// ThroughEncoder attends across frame groups; every other method encodes frames alone.
constexpr EncoderScope required_scope(FusionMethod m) {
  return m == FusionMethod::ThroughEncoder ? EncoderScope::PerGroup : EncoderScope::PerFrame;
}

}  // namespace tfz
