#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mvred/error.hpp"

namespace mvred {

// Structured point grid, 2 or 3 axes. Point storage order is fixed with x
// fastest-varying: index = x + dims[0]*(y + dims[1]*z).
struct GridSpec {
  std::vector<int> dims;

  int ndims() const { return static_cast<int>(dims.size()); }

  int dim(int axis) const {
    return axis < ndims() ? dims[static_cast<std::size_t>(axis)] : 1;
  }

  std::int64_t num_points() const {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }

  std::array<int, 3> coords(std::int64_t index) const {
    std::array<int, 3> c{0, 0, 0};
    c[0] = static_cast<int>(index % dims[0]);
    index /= dims[0];
    if (ndims() >= 2) {
      c[1] = static_cast<int>(index % dims[1]);
      index /= dims[1];
    }
    c[2] = static_cast<int>(index);
    return c;
  }

  std::int64_t index(const std::array<int, 3>& c) const {
    std::int64_t idx = c[0];
    if (ndims() >= 2) idx += static_cast<std::int64_t>(dims[0]) * c[1];
    if (ndims() >= 3)
      idx += static_cast<std::int64_t>(dims[0]) * dims[1] * c[2];
    return idx;
  }

  void validate() const {
    if (dims.size() != 2 && dims.size() != 3)
      throw ConfigError("grid must have 2 or 3 axes, got " +
                        std::to_string(dims.size()));
    for (int d : dims)
      if (d < 1)
        throw ConfigError("grid extents must be >= 1, got " +
                          std::to_string(d));
  }

  bool operator==(const GridSpec&) const = default;
};

}  // namespace mvred
