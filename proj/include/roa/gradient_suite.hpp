#pragma once

#include <functional>
#include <string>
#include <vector>

#include "roa/grad_check.hpp"
#include "roa/params.hpp"

namespace roa {

using ModuleFn = std::function<Var<double>(Scope<double>&, const Var<double>&)>;

/// Gradient check of a parameterized forward with respect to its input and
/// every trainable parameter it creates. The forward is first run once to
/// populate `store`; norms run in identity mode. The output is contracted with
/// a fixed random tensor before the sum so that every output entry carries a
/// distinct weight.
GradCheckReport grad_check_module(const ModuleFn& forward, const Tensor<double>& x, ParameterStore<double>& store,
                                  const GradCheckOptions& options = {});

struct SuiteResult {
  std::string name;
  GradCheckReport report;
  bool passed = false;
};

struct SuiteOptions {
  double threshold = 1e-4;
  double eps = 1e-5;
  // Sampled entries per tensor for the large composite checks (LKB and the
  // end-to-end network); the primitive checks cover every entry.
  Index sample_entries = 24;
  std::uint64_t seed = 17;
};

/// The full double-precision suite: conv2d at K = 3, 7, 13, bilinear sampling
/// (values and coordinates), SE, basic block, ASPP, DCN, LKB, and l_roa of
/// the whole network on a 1 x 3 x 64 x 96 input.
std::vector<SuiteResult> run_gradient_suite(const SuiteOptions& options = {},
                                            const std::function<void(const SuiteResult&)>& on_result = {});

}  // namespace roa
