#include "roa/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace roa {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'O', 'A', 'T'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) throw IoError("truncated ROAT stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

template <Real T>
Tensor<T> read_payload(std::istream& in, Shape shape) {
  using Bits = std::conditional_t<std::same_as<T, float>, std::uint32_t, std::uint64_t>;
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = std::bit_cast<T>(get_le<Bits>(in));
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <Real T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor) {
  using Bits = std::conditional_t<std::same_as<T, float>, std::uint32_t, std::uint64_t>;
  if (tensor.rank() > 255) throw IoError("ROAT supports rank <= 255");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.rank()));
  for (Index e : tensor.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw IoError("extent does not fit in u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  }
  for (T v : tensor.data()) put_le<Bits>(out, std::bit_cast<Bits>(v));
  if (!out) throw IoError("failed writing ROAT stream");
}

template <Real T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

AnyTensor read_any_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a ROAT stream (bad magic)");
  const auto code = get_le<std::uint8_t>(in);
  const auto rank = get_le<std::uint8_t>(in);
  Shape shape;
  for (int i = 0; i < rank; ++i) {
    const auto e = get_le<std::uint32_t>(in);
    if (e == 0) throw IoError("ROAT extent of zero");
    shape.push_back(static_cast<Index>(e));
  }
  switch (static_cast<DType>(code)) {
    case DType::kFloat32:
      return read_payload<float>(in, std::move(shape));
    case DType::kFloat64:
      return read_payload<double>(in, std::move(shape));
  }
  throw IoError("unknown ROAT dtype code " + std::to_string(code));
}

AnyTensor read_any_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_any_tensor(in);
}

template <Real T>
Tensor<T> read_tensor(std::istream& in) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, read_any_tensor(in));
}

template <Real T>
Tensor<T> read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor<T>(in);
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template void write_tensor(const std::filesystem::path&, const Tensor<float>&);
template void write_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);
template Tensor<float> read_tensor(const std::filesystem::path&);
template Tensor<double> read_tensor(const std::filesystem::path&);

}  // namespace roa
