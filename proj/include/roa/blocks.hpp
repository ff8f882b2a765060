#pragma once

#include <vector>

#include "roa/params.hpp"

namespace roa {

struct LkbConfig {
  Index channels = 16;
  Index kernel_size = 7;  // odd
  Index se_reduction = 4;
  std::vector<Index> aspp_dilations{1, 2, 3};

  // Throws InvalidArgument on an even kernel, a channel count the SE
  // reduction does not divide, or an empty/non-positive dilation list.
  void validate() const;
};

// Parameter layout (names under the block's scope):
//   conv:       weight [O, C, K, K], bias [O] (when requested)
//   norm:       gamma, beta [C]; buffers running_mean, running_var [C]
//   se:         fc1.{weight, bias} [C/r, C], fc2.{weight, bias} [C, C/r]
//   basic block conv1, norm1, conv2, norm2 (convs without bias)
//   aspp:       b0 (1x1), d<i> (3x3 at each dilation), pool (1x1 with bias),
//               project (1x1 over the concatenation); each non-pool branch and
//               the projection carry a norm
//   dcn:        offset (K x K conv to 2K^2 channels, zero init), conv (K x K)
//   lkb:        se, block1, block2, aspp, dcn

template <Real T>
Var<T> conv_layer(Scope<T>& s, const Var<T>& x, Index out_channels, Index kernel, const ConvGeometry& geom,
                  bool with_bias, Init weight_init = Init::kFanIn, Init bias_init = Init::kZero);

template <Real T>
Var<T> norm_layer(Scope<T>& s, const Var<T>& x);

/// x * sigmoid(fc2(relu(fc1(gap(x))))) with the gate broadcast per channel.
template <Real T>
Var<T> se_forward(Scope<T>& s, const Var<T>& x, Index reduction);

/// relu(x + norm(conv(relu(norm(conv(x)))))) with same-padded K x K convs.
template <Real T>
Var<T> basic_block_forward(Scope<T>& s, const Var<T>& x, Index kernel_size);

template <Real T>
Var<T> aspp_forward(Scope<T>& s, const Var<T>& x, const std::vector<Index>& dilations);

template <Real T>
Var<T> dcn_forward(Scope<T>& s, const Var<T>& x, Index kernel_size);

/// SE -> basic block -> basic block -> ASPP -> DCN.
template <Real T>
Var<T> lkb_forward(Scope<T>& s, const Var<T>& x, const LkbConfig& cfg);

}  // namespace roa
