#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kmpc/tensor.hpp"

namespace kmpc {

// Little binary helpers for checkpoint files. Fixed-width little-endian
// integers and raw float64, validated on read.

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("checkpoint read: unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double v) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(&v), 8);
}

inline double read_f64(std::istream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw std::runtime_error("checkpoint read: unexpected end of file");
  return v;
}

inline void write_f64_array(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(8 * n));
}

inline void read_f64_array(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(8 * n));
  if (!is) throw std::runtime_error("checkpoint read: unexpected end of file");
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  std::uint64_t n = read_u64(is);
  if (n > (1ULL << 20)) throw std::runtime_error("checkpoint read: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint read: unexpected end of file");
  return s;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
  write_u64(os, t.shape.size());
  for (std::size_t d : t.shape) write_u64(os, d);
  write_f64_array(os, t.data.data(), t.data.size());
}

inline Tensor read_tensor(std::istream& is) {
  std::uint64_t ndim = read_u64(is);
  if (ndim > 8) throw std::runtime_error("checkpoint read: implausible tensor rank");
  std::vector<std::size_t> shape(ndim);
  for (auto& d : shape) d = read_u64(is);
  Tensor t = Tensor::zeros(shape);
  read_f64_array(is, t.data.data(), t.data.size());
  return t;
}

}  // namespace kmpc
