// Binary tensor container ("SNMT"): the persistence format for masks,
// volumes, checkpoints and reconstructions.
//
// Layout (all integers little-endian):
//   magic "SNMT" | version u8 (=1) | entry_count u16
//   per entry: name_len u16, name bytes, dtype u8, ndim u8, dims u32*ndim,
//              payload (row-major, product(dims)*dtype_size bytes)
// dtype codes: 1=f32 2=f64 3=c64 4=c128 5=u8 6=i32
#pragma once

#include <complex>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "snm/tensor.hpp"

namespace snm {

enum class Dtype : std::uint8_t { f32 = 1, f64 = 2, c64 = 3, c128 = 4, u8 = 5, i32 = 6 };

std::size_t dtype_size(Dtype d);

template <typename T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr Dtype value = Dtype::f32;
};
template <>
struct dtype_of<double> {
  static constexpr Dtype value = Dtype::f64;
};
template <>
struct dtype_of<std::complex<float>> {
  static constexpr Dtype value = Dtype::c64;
};
template <>
struct dtype_of<std::complex<double>> {
  static constexpr Dtype value = Dtype::c128;
};
template <>
struct dtype_of<std::uint8_t> {
  static constexpr Dtype value = Dtype::u8;
};
template <>
struct dtype_of<std::int32_t> {
  static constexpr Dtype value = Dtype::i32;
};

class TensorContainer {
 public:
  struct Entry {
    std::string name;
    Dtype dtype;
    Shape dims;
    std::vector<std::uint8_t> payload;
  };

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    add_raw(name, dtype_of<T>::value, t.dims(),
            reinterpret_cast<const std::uint8_t*>(t.data()),
            static_cast<std::size_t>(t.numel()) * sizeof(T));
  }

  template <typename T>
  Tensor<T> get(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != dtype_of<T>::value)
      throw format_error("container entry '" + name + "' has unexpected dtype");
    Tensor<T> t(e.dims);
    std::memcpy(t.data(), e.payload.data(), e.payload.size());
    return t;
  }

  bool has(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  void save(const std::string& path) const;
  static TensorContainer load(const std::string& path);

  // Serialized byte image (used by save and by bit-exactness tests).
  std::vector<std::uint8_t> serialize() const;
  static TensorContainer deserialize(const std::vector<std::uint8_t>& bytes);

 private:
  void add_raw(const std::string& name, Dtype dtype, const Shape& dims, const std::uint8_t* bytes,
               std::size_t nbytes);
  std::vector<Entry> entries_;
};

}  // namespace snm
