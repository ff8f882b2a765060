#include "roa/gradient_suite.hpp"

#include "roa/blocks.hpp"
#include "roa/network.hpp"
#include "roa/ops.hpp"
#include "roa/random.hpp"

namespace roa {

GradCheckReport grad_check_module(const ModuleFn& forward, const Tensor<double>& x, ParameterStore<double>& store,
                                  const GradCheckOptions& options) {
  Shape out_shape;
  {
    Tape<double> tape;
    Scope<double> scope(tape, store, NormMode::kIdentity, false);
    out_shape = forward(scope, tape.constant(x)).shape();
  }
  Rng rng(options.seed ^ 0xa11ce);
  const Tensor<double> weights = random_uniform<double>(out_shape, -1.0, 1.0, rng);

  std::vector<std::string> names;
  std::vector<Tensor<double>> inputs{x};
  for (const auto& [name, entry] : store.entries()) {
    if (!entry.trainable) continue;
    names.push_back(name);
    inputs.push_back(entry.value);
  }
  auto fn = [&](Tape<double>& tape, const std::vector<Var<double>>& vars) {
    Scope<double> scope(tape, store, NormMode::kIdentity);
    for (std::size_t i = 0; i < names.size(); ++i) scope.bind(names[i], vars[i + 1]);
    return mul(forward(scope, vars[0]), tape.constant(weights));
  };
  return grad_check(fn, inputs, options);
}

namespace {

Tensor<double> uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_uniform<double>(shape, lo, hi, rng);
}

// Runs a forward once so `store` holds every parameter.
void populate(const ModuleFn& f, const Tensor<double>& x, ParameterStore<double>& store) {
  Tape<double> tape;
  Scope<double> scope(tape, store, NormMode::kIdentity, false);
  f(scope, tape.constant(x));
}

// Zero offsets sit on the bilinear kinks; move them inside a cell so the
// offset parameters are checked as well.
void offsets_off_lattice(ParameterStore<double>& store, Rng& rng) {
  for (auto& [name, e] : store.entries())
    if (name.find("offset.bias") != std::string::npos)
      for (auto& v : e.value.data()) v = rng.uniform(0.2, 0.8) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
}

}  // namespace

std::vector<SuiteResult> run_gradient_suite(const SuiteOptions& options,
                                            const std::function<void(const SuiteResult&)>& on_result) {
  GradCheckOptions full;
  full.eps = options.eps;
  full.seed = options.seed;
  GradCheckOptions sampled = full;
  sampled.max_entries_per_input = options.sample_entries;

  std::vector<SuiteResult> results;
  auto record = [&](std::string name, const GradCheckReport& report) {
    SuiteResult r{std::move(name), report, report.max_rel_error < options.threshold && report.checked > 0};
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  };
  Rng rng(options.seed);

  for (Index k : {3, 7, 13}) {
    const std::vector<Tensor<double>> in{uniform({1, 2, k + 3, k + 4}, rng), uniform({2, 2, k, k}, rng),
                                         uniform({2}, rng)};
    const ConvGeometry geom{1, k / 2, 1};
    record("conv2d_k" + std::to_string(k),
           grad_check([&](Tape<double>&, const auto& v) { return conv2d(v[0], v[1], v[2], geom); }, in, full));
  }

  {
    // Coordinates inside cells, some of them outside the image (zero padding).
    Tensor<double> pts({1, 4, 4, 2});
    for (auto& v : pts.data()) v = static_cast<double>(rng.index(7)) - 1.0 + rng.uniform(0.1, 0.9);
    const auto img = uniform({1, 3, 5, 5}, rng);
    record("bilinear_values", grad_check(
                                  [&](Tape<double>& t, const auto& v) { return bilinear_sample(v[0], t.constant(pts)); },
                                  {img}, full));
    record("bilinear_coords",
           grad_check([](Tape<double>&, const auto& v) { return bilinear_sample(v[0], v[1]); }, {img, pts}, full));
  }

  {
    ParameterStore<double> store(options.seed + 1);
    record("se", grad_check_module([](Scope<double>& s, const Var<double>& x) { return se_forward(s, x, 4); },
                                   uniform({2, 8, 3, 4}, rng), store, full));
  }
  {
    ParameterStore<double> store(options.seed + 2);
    record("basic_block",
           grad_check_module([](Scope<double>& s, const Var<double>& x) { return basic_block_forward(s, x, 7); },
                             uniform({1, 3, 8, 8}, rng), store, full));
  }
  {
    ParameterStore<double> store(options.seed + 3);
    record("aspp",
           grad_check_module([](Scope<double>& s, const Var<double>& x) { return aspp_forward(s, x, {1, 2, 3}); },
                             uniform({1, 3, 7, 8}, rng), store, full));
  }
  {
    ParameterStore<double> store(options.seed + 4);
    const ModuleFn f = [](Scope<double>& s, const Var<double>& x) { return dcn_forward(s, x, 3); };
    const auto x = uniform({1, 2, 6, 7}, rng);
    populate(f, x, store);
    offsets_off_lattice(store, rng);
    for (auto& v : store.at("offset.weight").data()) v = rng.uniform(-0.02, 0.02);
    record("dcn", grad_check_module(f, x, store, full));
  }
  {
    ParameterStore<double> store(options.seed + 5);
    const LkbConfig cfg{4, 3, 2, {1, 2}};
    const ModuleFn f = [&](Scope<double>& s, const Var<double>& x) { return lkb_forward(s, x, cfg); };
    const auto x = uniform({1, 4, 6, 6}, rng);
    populate(f, x, store);
    offsets_off_lattice(store, rng);
    record("lkb", grad_check_module(f, x, store, sampled));
  }
  {
    ModelConfig cfg;
    cfg.input_height = 64;
    cfg.input_width = 96;
    cfg.base_channels = 4;
    cfg.fpn_channels = 8;
    cfg.roa_channels = 4;
    cfg.kernel_size = 3;
    cfg.se_reduction = 2;
    cfg.aspp_dilations = {1, 2};
    ParameterStore<double> store(cfg.seed);
    const auto img = uniform({1, 3, 64, 96}, rng, 0.0, 1.0);
    const auto labels = uniform({1, 1, 4, 6}, rng, 0.0, 2.0);
    const ModuleFn f = [&](Scope<double>& s, const Var<double>& x) {
      return full_forward(s, x, s.tape().constant(labels), cfg).l_roa;
    };
    populate(f, img, store);
    offsets_off_lattice(store, rng);
    GradCheckOptions e2e = sampled;
    e2e.max_entries_per_input = std::max<Index>(1, options.sample_entries / 4);
    record("end_to_end_l_roa", grad_check_module(f, img, store, e2e));
  }
  return results;
}

}  // namespace roa
