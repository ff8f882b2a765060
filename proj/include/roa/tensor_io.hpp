#pragma once

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "roa/tensor.hpp"

namespace roa {

// ROAT layout: "ROAT", u8 dtype code, u8 rank, rank x u32 extents, then the
// payload as IEEE-754 values. Every multi-byte field is little-endian.

template <Real T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor);
template <Real T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& tensor);

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

AnyTensor read_any_tensor(std::istream& in);
AnyTensor read_any_tensor(const std::filesystem::path& path);

// Reads either dtype and converts to T.
template <Real T>
Tensor<T> read_tensor(std::istream& in);
template <Real T>
Tensor<T> read_tensor(const std::filesystem::path& path);

}  // namespace roa
