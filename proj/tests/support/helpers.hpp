#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "tosa/error.hpp"
#include "tosa/numerics.hpp"
#include "tosa/rng.hpp"

namespace testing {

// Kind of the tosa::Error thrown by f, or nullopt when f returns normally.
template <class F>
std::optional<tosa::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const tosa::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline tosa::Matrix random_matrix(tosa::SplitMix64& rng, std::size_t rows, std::size_t cols,
                                  double lo = -1.0, double hi = 1.0) {
  std::vector<float> data(rows * cols);
  for (float& v : data) v = static_cast<float>(rng.uniform(lo, hi));
  return tosa::Matrix(rows, cols, std::move(data));
}

inline tosa::Matrix from_rows(const std::vector<std::vector<float>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<float> data;
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return tosa::Matrix(rows.size(), cols, std::move(data));
}

}  // namespace testing
