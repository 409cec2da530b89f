#pragma once

#include <vector>

#include "kronsketch/types.hpp"

namespace kronsketch {

// Vectorization convention used everywhere in this library: a multi-index
// (i_1,...,i_q) over dims (n_1,...,n_q) flattens (0-based) to
//
//     flat = i_1 + sum_{l>=2} i_l * prod_{t<l} n_t
//
// i.e. the FIRST coordinate varies fastest. The Kronecker product entry
// convention is chosen to match: (A_1 (x) ... (x) A_q) has entry
// (flat(rows), flat(cols)) = prod_l (A_l)_{row_l, col_l}. Tensors are stored
// flat in the same layout, so a q=2 tensor is an Eigen column-major matrix.

/// Product of dims with overflow detection (construction must fail rather
/// than wrap).
inline Index checked_product(const std::vector<Index>& dims) {
  Index prod = 1;
  for (Index d : dims) {
    require(d >= 1, "dimension must be >= 1");
    if (d != 0 && prod > UINT64_MAX / d)
      throw std::overflow_error("index product overflows 64-bit range");
    prod *= d;
  }
  return prod;
}

struct MultiIndex {
  std::vector<Index> coords;  // 0-based, coords[l] in [0, dims[l])
  std::vector<Index> dims;

  MultiIndex(std::vector<Index> c, std::vector<Index> d)
      : coords(std::move(c)), dims(std::move(d)) {
    require(coords.size() == dims.size(), "coords/dims arity mismatch");
    for (std::size_t l = 0; l < coords.size(); ++l)
      require(coords[l] < dims[l], "coordinate out of range");
  }

  [[nodiscard]] Index flatten() const { return flatten_index(coords, dims); }

  static Index flatten_index(const std::vector<Index>& coords,
                             const std::vector<Index>& dims) {
    Index flat = 0;
    Index stride = 1;
    for (std::size_t l = 0; l < dims.size(); ++l) {
      flat += coords[l] * stride;
      stride *= dims[l];
    }
    return flat;
  }

  static MultiIndex unflatten(Index flat, const std::vector<Index>& dims) {
    std::vector<Index> coords(dims.size());
    for (std::size_t l = 0; l < dims.size(); ++l) {
      coords[l] = flat % dims[l];
      flat /= dims[l];
    }
    require(flat == 0, "flat index out of range");
    return MultiIndex(std::move(coords), dims);
  }
};

}  // namespace kronsketch
