#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "roa/blocks.hpp"
#include "roa/labels.hpp"

namespace roa {

enum class ScaleMode {
  kSameScale,   // only the stride-16 backbone level feeds the head
  kFpnFeature,  // the fused FPN map feeds the head
  kMultiScale,  // all four backbone levels, one LKB each, summed at stride 16
};

ScaleMode parse_scale_mode(std::string_view text);
std::string_view to_string(ScaleMode mode);

inline constexpr Index kOutputStride = 16;

struct ModelConfig {
  Index input_height = 256;
  Index input_width = 704;
  Index base_channels = 16;  // backbone stages use base * (1, 2, 4, 8)
  Index fpn_channels = 32;
  Index roa_channels = 16;   // width of every LKB
  Index kernel_size = 7;
  Index se_reduction = 4;
  std::vector<Index> aspp_dilations{1, 2, 3};
  ScaleMode scale_mode = ScaleMode::kMultiScale;
  RegionType region_type = RegionType::kOverlap;
  bool shared_lkb = false;          // one LKB for every level instead of one each
  bool residual_attention = false;  // features * (1 + roa) instead of features * roa
  std::uint64_t seed = 7;

  void validate() const;
  LkbConfig lkb() const { return {roa_channels, kernel_size, se_reduction, aspp_dilations}; }
  Index output_height() const { return input_height / kOutputStride; }
  Index output_width() const { return input_width / kOutputStride; }

  // Flat key=value text, one field per line, '#' comments allowed. Unknown
  // keys and malformed values raise ParseError.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
};

template <Real T>
struct FeaturePyramid {
  std::array<Var<T>, 4> levels;  // strides 4, 8, 16, 32
};

/// Stem (5x5, stride 4) then three 3x3 stride-2 stages; each stage is
/// conv + norm + relu followed by one 3x3 basic block.
template <Real T>
FeaturePyramid<T> backbone_forward(Scope<T>& s, const Var<T>& image, const ModelConfig& cfg);

/// Brings a pyramid level (0..3) to stride 16: block-average for the finer
/// levels, bilinear x2 for the coarsest.
template <Real T>
Var<T> resample_to_output(const Var<T>& x, int level);

/// 1x1 laterals, every level resampled to stride 16 and summed, then a 3x3
/// conv.
template <Real T>
Var<T> fpn_forward(Scope<T>& s, const FeaturePyramid<T>& pyr, const ModelConfig& cfg);

/// N x 1 x H/16 x W/16, non-negative. Each source is projected to
/// roa_channels by a 1x1 conv before its LKB.
template <Real T>
Var<T> roa_forward(Scope<T>& s, const FeaturePyramid<T>& pyr, const Var<T>& fpn_out, const ModelConfig& cfg);

template <Real T>
Var<T> apply_attention(const Var<T>& features, const Var<T>& roa, bool residual = false);

template <Real T>
struct ForwardResult {
  FeaturePyramid<T> pyramid;
  Var<T> fpn_out;
  Var<T> roa_pred;
  Var<T> features;  // fpn_out modulated by roa_pred
  Var<T> l_roa;     // only valid when labels were given
};

/// backbone -> fpn -> roa head -> attention -> L1 against `labels`
/// (N x 1 x H/16 x W/16; pass an invalid Var to skip the loss).
template <Real T>
ForwardResult<T> full_forward(Scope<T>& s, const Var<T>& image, const Var<T>& labels, const ModelConfig& cfg,
                              Reduction reduction = Reduction::kMean);

}  // namespace roa
