#pragma once

#include <string>
#include <vector>

#include "dqpp/core.hpp"
#include "dqpp/error.hpp"

namespace dqpp {

// How the (M, k, p) tensor is sliced into matrices for 2D convolution:
// merge (M) or separate (S) over documents (D) and query terms (Q).
enum class ReshapeMode { mdmq, sdmq, mdsq, sdsq };

inline const char* to_string(ReshapeMode mode) {
  switch (mode) {
    case ReshapeMode::mdmq: return "mdmq";
    case ReshapeMode::sdmq: return "sdmq";
    case ReshapeMode::mdsq: return "mdsq";
    case ReshapeMode::sdsq: return "sdsq";
  }
  return "?";
}

inline ReshapeMode parse_reshape_mode(const std::string& s) {
  if (s == "mdmq") return ReshapeMode::mdmq;
  if (s == "sdmq") return ReshapeMode::sdmq;
  if (s == "mdsq") return ReshapeMode::mdsq;
  if (s == "sdsq") return ReshapeMode::sdsq;
  throw UsageError("unknown reshape mode: " + s);
}

constexpr ReshapeMode kAllReshapeModes[] = {ReshapeMode::mdmq, ReshapeMode::sdmq,
                                            ReshapeMode::mdsq, ReshapeMode::sdsq};

struct SliceSet {
  ReshapeMode mode = ReshapeMode::sdmq;
  std::vector<Matrix> slices;  // all slices share one shape
};

// Slice shape produced by a mode for a given (M, k, p).
inline std::pair<std::size_t, std::size_t> slice_shape(ReshapeMode mode,
                                                       std::size_t m,
                                                       std::size_t k,
                                                       std::size_t p) {
  switch (mode) {
    case ReshapeMode::mdmq: return {1, m * k * p};
    case ReshapeMode::sdmq: return {k, p};
    case ReshapeMode::mdsq: return {m, p};
    case ReshapeMode::sdsq: return {1, p};
  }
  return {0, 0};
}

inline std::size_t slice_count(ReshapeMode mode, std::size_t m, std::size_t k) {
  switch (mode) {
    case ReshapeMode::mdmq: return 1;
    case ReshapeMode::sdmq: return m;
    case ReshapeMode::mdsq: return k;
    case ReshapeMode::sdsq: return m * k;
  }
  return 0;
}

// Lossless slicing. MDMQ flattens in (slab, row, bin) order; SDMQ slice i is
// slab i; MDSQ slice j holds tensor[., j, .] with documents as rows; SDSQ
// slice i*k + j holds tensor[i, j, .].
inline SliceSet reshape(const Tensor3& tensor, ReshapeMode mode) {
  const std::size_t m = tensor.slabs, k = tensor.rows, p = tensor.bins;
  if (m == 0 || k == 0 || p == 0)
    throw DataError("reshape: degenerate tensor shape");
  SliceSet out;
  out.mode = mode;
  switch (mode) {
    case ReshapeMode::mdmq: {
      Matrix flat(1, m * k * p);
      flat.v = tensor.v;  // storage is already (slab, row, bin) order
      out.slices.push_back(std::move(flat));
      break;
    }
    case ReshapeMode::sdmq: {
      for (std::size_t i = 0; i < m; ++i) {
        Matrix s(k, p);
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t beta = 0; beta < p; ++beta)
            s.at(j, beta) = tensor.at(i, j, beta);
        out.slices.push_back(std::move(s));
      }
      break;
    }
    case ReshapeMode::mdsq: {
      for (std::size_t j = 0; j < k; ++j) {
        Matrix s(m, p);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t beta = 0; beta < p; ++beta)
            s.at(i, beta) = tensor.at(i, j, beta);
        out.slices.push_back(std::move(s));
      }
      break;
    }
    case ReshapeMode::sdsq: {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          Matrix s(1, p);
          for (std::size_t beta = 0; beta < p; ++beta)
            s.at(0, beta) = tensor.at(i, j, beta);
          out.slices.push_back(std::move(s));
        }
      break;
    }
  }
  return out;
}

// Exact inverse of reshape; validates slice counts and shapes against
// (mode, M, k, p).
inline Tensor3 inverse_reshape(const SliceSet& slices, std::size_t m,
                               std::size_t k, std::size_t p) {
  if (m == 0 || k == 0 || p == 0)
    throw DataError("inverse_reshape: degenerate target shape");
  auto [h, w] = slice_shape(slices.mode, m, k, p);
  if (slices.slices.size() != slice_count(slices.mode, m, k))
    throw DataError("inverse_reshape: expected " +
                    std::to_string(slice_count(slices.mode, m, k)) +
                    " slices, got " + std::to_string(slices.slices.size()));
  for (const Matrix& s : slices.slices)
    if (s.rows != h || s.cols != w)
      throw DataError("inverse_reshape: slice shape mismatch");
  Tensor3 tensor(m, k, p);
  switch (slices.mode) {
    case ReshapeMode::mdmq:
      tensor.v = slices.slices[0].v;
      break;
    case ReshapeMode::sdmq:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t beta = 0; beta < p; ++beta)
            tensor.at(i, j, beta) = slices.slices[i].at(j, beta);
      break;
    case ReshapeMode::mdsq:
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t beta = 0; beta < p; ++beta)
            tensor.at(i, j, beta) = slices.slices[j].at(i, beta);
      break;
    case ReshapeMode::sdsq:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t beta = 0; beta < p; ++beta)
            tensor.at(i, j, beta) = slices.slices[i * k + j].at(0, beta);
      break;
  }
  return tensor;
}

}  // namespace dqpp
