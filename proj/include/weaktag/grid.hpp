#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace weaktag {

/// Dense row-major grid. Used for power spectrograms, filterbanks, feature
/// matrices and K x M score maps alike.
template <class T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), values(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

}  // namespace weaktag
