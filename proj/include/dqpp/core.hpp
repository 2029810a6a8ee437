#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <vector>

#include "dqpp/error.hpp"

namespace dqpp {

using Rng = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits; avoids distribution objects so the
// stream is identical across standard libraries.
inline double next_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

// Order-3 array laid out slab-major: (slab, row, bin).
struct Tensor3 {
  std::size_t slabs = 0;
  std::size_t rows = 0;
  std::size_t bins = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(std::size_t m, std::size_t k, std::size_t p)
      : slabs(m), rows(k), bins(p), v(m * k * p, 0.0) {}

  double& at(std::size_t i, std::size_t j, std::size_t b) {
    return v[(i * rows + j) * bins + b];
  }
  double at(std::size_t i, std::size_t j, std::size_t b) const {
    return v[(i * rows + j) * bins + b];
  }
};

// Little-endian primitives for the binary file formats.
inline void write_u32_le(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff),
                        static_cast<unsigned char>((x >> 16) & 0xff),
                        static_cast<unsigned char>((x >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64_le(std::ostream& os, std::uint64_t x) {
  write_u32_le(os, static_cast<std::uint32_t>(x & 0xffffffffu));
  write_u32_le(os, static_cast<std::uint32_t>(x >> 32));
}

inline void write_f32_le(std::ostream& os, float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  write_u32_le(os, x);
}

inline std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("unexpected end of binary stream");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64_le(std::istream& is) {
  std::uint64_t lo = read_u32_le(is);
  std::uint64_t hi = read_u32_le(is);
  return lo | (hi << 32);
}

inline float read_f32_le(std::istream& is) {
  std::uint32_t x = read_u32_le(is);
  float f;
  std::memcpy(&f, &x, 4);
  return f;
}

}  // namespace dqpp
