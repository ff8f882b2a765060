#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "roa/autodiff.hpp"
#include "roa/ops.hpp"
#include "roa/random.hpp"

namespace roa {

enum class Init {
  kFanIn,  // uniform in +-1/sqrt(fan_in), fan_in = numel / shape[0]
  kZero,
  kOne,
};

/// Named tensors owned across training steps: learnable weights plus
/// non-trainable buffers such as batch-norm running statistics. Entries are
/// created on first request, drawing from the store's generator, so a fixed
/// seed and a fixed forward order give identical weights.
template <Real T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> value;
    bool trainable = true;
  };

  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  // Existing entries must match `shape` (ShapeMismatch otherwise).
  Tensor<T>& get_or_init(const std::string& name, const Shape& shape, Init init, bool trainable);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Number of scalars, optionally restricted to trainable entries and to
  // names starting with `prefix`.
  Index count(bool trainable_only = true, std::string_view prefix = {}) const;

  Rng& rng() { return rng_; }

 private:
  std::map<std::string, Entry> entries_;
  Rng rng_;
};

/// Binds store entries onto one tape under a dotted name prefix. A parameter
/// used several times within the same tape maps to a single Var, so shared
/// weights collect gradients from every use.
template <Real T>
class Scope {
 public:
  Scope(Tape<T>& tape, ParameterStore<T>& store, NormMode mode = NormMode::kEval, bool trainable = true);

  Scope sub(std::string_view name) const;

  Var<T> param(std::string_view name, const Shape& shape, Init init);
  // Makes later param(full_name) calls return v instead of the stored value.
  void bind(const std::string& full_name, const Var<T>& v) { (*bound_)[full_name] = v; }
  Tensor<T>& buffer(std::string_view name, const Shape& shape, Init init);

  Tape<T>& tape() const { return *tape_; }
  ParameterStore<T>& store() const { return *store_; }
  NormMode norm_mode() const { return mode_; }
  const std::string& prefix() const { return prefix_; }

  // Every parameter bound so far on this tape, by full name.
  const std::map<std::string, Var<T>>& bindings() const { return *bound_; }

 private:
  Tape<T>* tape_;
  ParameterStore<T>* store_;
  NormMode mode_;
  bool trainable_;
  std::string prefix_;
  std::shared_ptr<std::map<std::string, Var<T>>> bound_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Scope<float>;
extern template class Scope<double>;

}  // namespace roa
