#include "roa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "roa/ops.hpp"

namespace roa {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << "max_rel_error=" << max_rel_error << " checked=" << checked
     << " skipped_kinks=" << skipped_kinks;
  if (checked > 0) {
    os << " worst=input" << worst_input << "[" << worst_entry << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  }
  return os.str();
}

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var<double> out = sum(fn(tape, vars));
  return {out.value().item(), tape.branch_signature()};
}

std::vector<Index> pick_entries(Index n, Index limit, std::mt19937_64& rng) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  if (limit <= 0 || limit >= n) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(limit));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options) {
  std::vector<Tensor<double>> analytic;
  std::uint64_t base_signature = 0;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    const Var<double> out = sum(fn(tape, vars));
    base_signature = tape.branch_signature();
    tape.backward(out);
    for (const auto& v : vars) {
      Tensor<double>* g = tape.grad_slot(v);
      analytic.push_back(*g);
    }
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    for (Index i : pick_entries(inputs[j].numel(), options.max_entries_per_input, rng)) {
      const double x0 = inputs[j][i];
      probe[j][i] = x0 + options.eps;
      const Evaluation up = evaluate(fn, probe);
      probe[j][i] = x0 - options.eps;
      const Evaluation down = evaluate(fn, probe);
      probe[j][i] = x0;
      if (options.skip_kinks && (up.signature != base_signature || down.signature != base_signature)) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (up.value - down.value) / (2.0 * options.eps);
      const double a = analytic[j][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel >= report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = j;
        report.worst_entry = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace roa
