#pragma once

// Register-tiled products used by matmul, cosine scores and attention.
// Dot products are accumulated in ascending index order, in double except for
// the explicitly single-precision tile.

#include <cmath>
#include <cstddef>
#include <cstring>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace tosa::kernels {

using Vec8d = double __attribute__((vector_size(64)));
using Vec8f = float __attribute__((vector_size(32)));
using Vec16f = float __attribute__((vector_size(64)));

inline constexpr std::size_t kRowTile = 8;
inline constexpr std::size_t kColTile = 16;
inline constexpr std::size_t kColTileF32 = 32;

inline std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

inline Vec8d load8(const float* src) {
  Vec8f f;
  std::memcpy(&f, src, sizeof f);
  return __builtin_convertvector(f, Vec8d);
}

// Fused acc + a * x. Without AVX-512 each lane goes through std::fma so both
// builds round identically.
inline Vec8d fma8(double a, Vec8d x, Vec8d acc) {
#if defined(__AVX512F__)
  return reinterpret_cast<Vec8d>(_mm512_fmadd_pd(_mm512_set1_pd(a), reinterpret_cast<__m512d>(x),
                                                 reinterpret_cast<__m512d>(acc)));
#else
  for (int k = 0; k < 8; ++k) acc[k] = std::fma(a, x[k], acc[k]);
  return acc;
#endif
}

// out[r * out_stride + j] = sum_p lhs[r * lhs_stride + p] * rhs[p * rhs_stride + j]
// for r < R, p < depth, j < cols. cols must be a multiple of kColTile.
template <std::size_t R>
void tile_product(const float* lhs, std::size_t lhs_stride, std::size_t depth, const float* rhs,
                  std::size_t rhs_stride, std::size_t cols, double* out, std::size_t out_stride) {
  for (std::size_t j0 = 0; j0 < cols; j0 += kColTile) {
    Vec8d lo[R] = {};
    Vec8d hi[R] = {};
    for (std::size_t p = 0; p < depth; ++p) {
      const float* rrow = rhs + p * rhs_stride + j0;
      const Vec8d r0 = load8(rrow);
      const Vec8d r1 = load8(rrow + 8);
      for (std::size_t r = 0; r < R; ++r) {
        const double a = lhs[r * lhs_stride + p];
        lo[r] = fma8(a, r0, lo[r]);
        hi[r] = fma8(a, r1, hi[r]);
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      std::memcpy(out + r * out_stride + j0, &lo[r], sizeof lo[r]);
      std::memcpy(out + r * out_stride + j0 + 8, &hi[r], sizeof hi[r]);
    }
  }
}

// Single-precision counterpart of tile_product; cols must be a multiple of
// kColTileF32.
template <std::size_t R>
void tile_product_f32(const float* lhs, std::size_t lhs_stride, std::size_t depth,
                      const float* rhs, std::size_t rhs_stride, std::size_t cols, float* out,
                      std::size_t out_stride) {
  for (std::size_t j0 = 0; j0 < cols; j0 += kColTileF32) {
    Vec16f lo[R] = {};
    Vec16f hi[R] = {};
    for (std::size_t p = 0; p < depth; ++p) {
      Vec16f r0, r1;
      std::memcpy(&r0, rhs + p * rhs_stride + j0, sizeof r0);
      std::memcpy(&r1, rhs + p * rhs_stride + j0 + 16, sizeof r1);
      for (std::size_t r = 0; r < R; ++r) {
        const float a = lhs[r * lhs_stride + p];
#if defined(__AVX512F__)
        const __m512 av = _mm512_set1_ps(a);
        lo[r] = reinterpret_cast<Vec16f>(_mm512_fmadd_ps(av, reinterpret_cast<__m512>(r0),
                                                         reinterpret_cast<__m512>(lo[r])));
        hi[r] = reinterpret_cast<Vec16f>(_mm512_fmadd_ps(av, reinterpret_cast<__m512>(r1),
                                                         reinterpret_cast<__m512>(hi[r])));
#else
        for (int k = 0; k < 16; ++k) {
          lo[r][k] = std::fma(a, r0[k], lo[r][k]);
          hi[r][k] = std::fma(a, r1[k], hi[r][k]);
        }
#endif
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      std::memcpy(out + r * out_stride + j0, &lo[r], sizeof lo[r]);
      std::memcpy(out + r * out_stride + j0 + 16, &hi[r], sizeof hi[r]);
    }
  }
}

// Calls visit(row, products) for every lhs row, where products points at
// `cols` doubles. rhs is depth x cols with row stride rhs_stride, padded with
// zeros to a multiple of kColTile.
template <class Visit>
void for_each_product_row(const float* lhs, std::size_t rows, std::size_t depth,
                          const float* rhs, std::size_t rhs_stride, std::size_t cols,
                          double* scratch, Visit&& visit) {
  const std::size_t cols_pad = round_up(cols, kColTile);
  std::size_t i = 0;
  for (; i + kRowTile <= rows; i += kRowTile) {
    tile_product<kRowTile>(lhs + i * depth, depth, depth, rhs, rhs_stride, cols_pad, scratch,
                           cols_pad);
    for (std::size_t r = 0; r < kRowTile; ++r) visit(i + r, scratch + r * cols_pad);
  }
  for (; i < rows; ++i) {
    tile_product<1>(lhs + i * depth, depth, depth, rhs, rhs_stride, cols_pad, scratch, cols_pad);
    visit(i, scratch);
  }
}

}  // namespace tosa::kernels
