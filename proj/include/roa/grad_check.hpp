#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "roa/autodiff.hpp"

namespace roa {

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
  // 0 checks every entry; otherwise at most this many (seeded) per input.
  Index max_entries_per_input = 0;
  std::uint64_t seed = 0x5eed;
  // Entries whose +-eps stencil straddles a kink (a relu switching sides, a
  // bilinear sample crossing a pixel boundary, |.| crossing zero) are
  // excluded: central differences are meaningless there.
  bool skip_kinks = true;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index checked = 0;
  Index skipped_kinks = 0;
  std::size_t worst_input = 0;
  Index worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string summary() const;
};

// Builds the op under test from its inputs. The returned output is reduced by
// summing all entries.
using GradCheckFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients with central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) over the entries of every input.
GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace roa
