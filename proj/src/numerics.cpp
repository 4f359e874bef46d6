#include "tosa/numerics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "kernels.hpp"
#include "tosa/error.hpp"

namespace tosa {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::shape, "matrix data has " + std::to_string(data_.size()) +
                                      " values, expected " + std::to_string(rows) + "x" +
                                      std::to_string(cols));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(ErrorKind::non_finite, "matrix value at flat index " + std::to_string(i) +
                                             " is not finite");
    }
  }
}

Matrix gather_rows(const Matrix& m, std::span<const std::uint32_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::ranges::copy(m.row(indices[i]), out.row(i).begin());
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  }
  return out;
}

namespace {

// Row-major rows x cols copy with each row padded to a multiple of the tile width.
std::vector<float> padded_rows(const float* src, std::size_t rows, std::size_t cols) {
  const std::size_t stride = kernels::round_up(cols, kernels::kColTile);
  std::vector<float> out(rows * stride, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(src + r * cols, cols, out.data() + r * stride);
  return out;
}

std::vector<double> row_norms(const Matrix& m, const char* name) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sq = 0.0;
    for (float v : m.row(r)) sq += static_cast<double>(v) * v;
    if (sq == 0.0) {
      throw Error(ErrorKind::degenerate_vector,
                  std::string("row ") + std::to_string(r) + " of " + name + " has zero norm");
    }
    norms[r] = std::sqrt(sq);
  }
  return norms;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::shape, "matmul inner dimensions " + std::to_string(a.cols()) +
                                      " and " + std::to_string(b.rows()) + " differ");
  }
  Matrix out(a.rows(), b.cols());
  if (out.empty()) return out;
  const std::size_t m = b.cols();
  const auto rhs = padded_rows(b.data().data(), b.rows(), m);
  std::vector<double> scratch(kernels::kRowTile * kernels::round_up(m, kernels::kColTile));
  kernels::for_each_product_row(a.data().data(), a.rows(), a.cols(), rhs.data(),
                                kernels::round_up(m, kernels::kColTile), m, scratch.data(),
                                [&](std::size_t i, const double* acc) {
                                  auto orow = out.row(i);
                                  for (std::size_t j = 0; j < m; ++j) {
                                    orow[j] = static_cast<float>(acc[j]);
                                  }
                                });
  return out;
}

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || a.cols() == 0) {
    throw Error(ErrorKind::invalid_dimension, "cosine similarity needs equal non-zero widths, got " +
                                                  std::to_string(a.cols()) + " and " +
                                                  std::to_string(b.cols()));
  }
  const auto na = row_norms(a, "A");
  const auto nb = row_norms(b, "B");
  Matrix out(a.rows(), b.rows());
  if (out.empty()) return out;
  const Matrix bt = transpose(b);
  const std::size_t m = b.rows();
  const auto rhs = padded_rows(bt.data().data(), bt.rows(), m);
  std::vector<double> scratch(kernels::kRowTile * kernels::round_up(m, kernels::kColTile));
  kernels::for_each_product_row(a.data().data(), a.rows(), a.cols(), rhs.data(),
                                kernels::round_up(m, kernels::kColTile), m, scratch.data(),
                                [&](std::size_t i, const double* acc) {
                                  auto orow = out.row(i);
                                  for (std::size_t j = 0; j < m; ++j) {
                                    orow[j] = static_cast<float>(acc[j] / (na[i] * nb[j]));
                                  }
                                });
  return out;
}

namespace {

struct CosineBlock {
  const Matrix& a;
  const Matrix& b;
  double weight;
};

void check_cosine_widths(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || a.cols() == 0) {
    throw Error(ErrorKind::invalid_dimension, "cosine similarity needs equal non-zero widths, got " +
                                                  std::to_string(a.cols()) + " and " +
                                                  std::to_string(b.cols()));
  }
}

// sum_k weight_k * cos(a_k[i], b_k[j]) as one float dot product over rows
// that concatenate sqrt(weight_k) * unit rows of every block.
Matrix weighted_cosine_f32(std::span<const CosineBlock> blocks) {
  const std::size_t n = blocks.front().a.rows();
  const std::size_t m = blocks.front().b.rows();
  std::size_t d = 0;
  for (const auto& blk : blocks) {
    check_cosine_widths(blk.a, blk.b);
    if (blk.a.rows() != n || blk.b.rows() != m) {
      throw Error(ErrorKind::shape, "blended cosine blocks disagree on row counts");
    }
    d += blk.a.cols();
  }
  const std::size_t m_pad = kernels::round_up(m, kernels::kColTileF32);
  std::vector<float> unit_a(n * d);
  std::vector<float> unit_bt(d * m_pad, 0.0f);
  std::size_t offset = 0;
  for (const auto& blk : blocks) {
    const auto na = row_norms(blk.a, "A");
    const auto nb = row_norms(blk.b, "B");
    const double scale = std::sqrt(blk.weight);
    const std::size_t w = blk.a.cols();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < w; ++p) {
        unit_a[i * d + offset + p] = static_cast<float>(scale * blk.a(i, p) / na[i]);
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t p = 0; p < w; ++p) {
        unit_bt[(offset + p) * m_pad + j] = static_cast<float>(scale * blk.b(j, p) / nb[j]);
      }
    }
    offset += w;
  }
  Matrix out(n, m);
  if (out.empty()) return out;
  std::vector<float> scratch(kernels::kRowTile * m_pad);
  const auto emit = [&](std::size_t i, std::size_t rows) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(scratch.data() + r * m_pad, m, out.row(i + r).begin());
    }
  };
  std::size_t i = 0;
  for (; i + kernels::kRowTile <= n; i += kernels::kRowTile) {
    kernels::tile_product_f32<kernels::kRowTile>(unit_a.data() + i * d, d, d, unit_bt.data(),
                                                 m_pad, m_pad, scratch.data(), m_pad);
    emit(i, kernels::kRowTile);
  }
  for (; i < n; ++i) {
    kernels::tile_product_f32<1>(unit_a.data() + i * d, d, d, unit_bt.data(), m_pad, m_pad,
                                 scratch.data(), m_pad);
    emit(i, 1);
  }
  return out;
}

}  // namespace

Matrix cosine_similarity_matrix_f32(const Matrix& a, const Matrix& b) {
  const CosineBlock block{a, b, 1.0};
  return weighted_cosine_f32({&block, 1});
}

Matrix blended_cosine_similarity_f32(const Matrix& a1, const Matrix& b1, const Matrix& a2,
                                     const Matrix& b2, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw Error(ErrorKind::domain, "blend weight " + std::to_string(weight) + " is outside [0, 1]");
  }
  const std::array<CosineBlock, 2> blocks{CosineBlock{a1, b1, weight},
                                          CosineBlock{a2, b2, 1.0 - weight}};
  return weighted_cosine_f32(blocks);
}

std::vector<float> sinusoidal_encoding(std::size_t index, std::size_t dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw Error(ErrorKind::invalid_dimension,
                "sinusoidal encoding needs an even dim >= 2, got " + std::to_string(dim));
  }
  std::vector<float> out(dim);
  const double pos = static_cast<double>(index);
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[2 * k] = static_cast<float>(std::sin(pos * freq));
    out[2 * k + 1] = static_cast<float>(std::cos(pos * freq));
  }
  return out;
}

Matrix row_softmax_with_bias(const Matrix& logits, std::span<const float> bias) {
  if (bias.size() != logits.cols()) {
    throw Error(ErrorKind::shape, "softmax bias has length " + std::to_string(bias.size()) +
                                      ", expected " + std::to_string(logits.cols()));
  }
  Matrix out(logits.rows(), logits.cols());
  std::vector<double> row(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = static_cast<double>(in[j]) + bias[j];
    const double peak = max_of(row);
    for (double& v : row) v -= peak;
    exp_nonpositive_inplace(row);
    const double total = sum_of(row);
    auto o = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) o[j] = static_cast<float>(row[j] / total);
  }
  return out;
}

double max_of(std::span<const double> values) {
  double lanes[8];
  std::ranges::fill(lanes, -HUGE_VAL);
  std::size_t i = 0;
  for (; i + 8 <= values.size(); i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lanes[l] = lanes[l] > values[i + l] ? lanes[l] : values[i + l];
  }
  double peak = -HUGE_VAL;
  for (double v : lanes) peak = std::max(peak, v);
  for (; i < values.size(); ++i) peak = std::max(peak, values[i]);
  return peak;
}

double sum_of(std::span<const double> values) {
  double lanes[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= values.size(); i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += values[i + l];
  }
  double total = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                 ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < values.size(); ++i) total += values[i];
  return total;
}

WeightedRow weighted_row_average(std::span<const float> f_a, float s_a,
                                 std::span<const float> f_b, float s_b) {
  if (!(s_a > 0.0f) || !(s_b > 0.0f)) {
    throw Error(ErrorKind::invalid_size, "token sizes must be positive, got " +
                                             std::to_string(s_a) + " and " + std::to_string(s_b));
  }
  if (f_a.size() != f_b.size()) {
    throw Error(ErrorKind::shape, "feature widths differ: " + std::to_string(f_a.size()) +
                                      " vs " + std::to_string(f_b.size()));
  }
  const double wa = s_a;
  const double wb = s_b;
  const double total = wa + wb;
  WeightedRow out{std::vector<float>(f_a.size()), static_cast<float>(total)};
  for (std::size_t k = 0; k < f_a.size(); ++k) {
    out.features[k] = static_cast<float>((wa * f_a[k] + wb * f_b[k]) / total);
  }
  return out;
}

Matrix layer_norm(const Matrix& x, std::span<const float> gain, std::span<const float> bias,
                  double eps) {
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw Error(ErrorKind::shape, "layer norm parameters do not match width " +
                                      std::to_string(x.cols()));
  }
  Matrix out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = static_cast<float>((in[c] - mean) * inv * gain[c] + bias[c]);
    }
  }
  return out;
}

double gelu_tanh(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  constexpr double kCubic = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kCubic * x * x * x)));
}

void gelu_tanh_inplace(std::span<float> values) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  constexpr double kCubic = 0.044715;
  constexpr std::size_t kChunk = 256;
  double u[kChunk];
  double e[kChunk];
  for (std::size_t start = 0; start < values.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, values.size() - start);
    float* v = values.data() + start;
    for (std::size_t i = 0; i < len; ++i) {
      const double x = v[i];
      u[i] = kSqrt2OverPi * (x + kCubic * x * x * x);
      e[i] = -2.0 * std::fabs(u[i]);
    }
    exp_nonpositive_inplace({e, len});
    // tanh|u| = (1 - exp(-2|u|)) / (1 + exp(-2|u|))
    for (std::size_t i = 0; i < len; ++i) {
      const double th = std::copysign((1.0 - e[i]) / (1.0 + e[i]), u[i]);
      v[i] = static_cast<float>(0.5 * v[i] * (1.0 + th));
    }
  }
}

void exp_nonpositive_inplace(std::span<double> values) {
  // exp(x) = 2^n * exp(t), n = round(x / ln 2), |t| <= ln2 / 2, with a
  // degree-13 Taylor polynomial for exp(t).
  constexpr double kLog2e = std::numbers::log2e;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kRound = 0x1.8p52;
  constexpr double kFloor = -708.0;
  double* v = values.data();
  const std::size_t n = values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double in = v[i];
    const double x = std::max(in, kFloor);
    const double k = (x * kLog2e + kRound) - kRound;
    const double t = std::fma(-k, kLn2Lo, std::fma(-k, kLn2Hi, x));
    double p = 1.0 / 6227020800.0;
    p = std::fma(p, t, 1.0 / 479001600.0);
    p = std::fma(p, t, 1.0 / 39916800.0);
    p = std::fma(p, t, 1.0 / 3628800.0);
    p = std::fma(p, t, 1.0 / 362880.0);
    p = std::fma(p, t, 1.0 / 40320.0);
    p = std::fma(p, t, 1.0 / 5040.0);
    p = std::fma(p, t, 1.0 / 720.0);
    p = std::fma(p, t, 1.0 / 120.0);
    p = std::fma(p, t, 1.0 / 24.0);
    p = std::fma(p, t, 1.0 / 6.0);
    p = std::fma(p, t, 0.5);
    p = std::fma(p, t, 1.0);
    p = std::fma(p, t, 1.0);
    const std::int64_t bits = (static_cast<std::int64_t>(k) + 1023) << 52;
    const double scaled = p * std::bit_cast<double>(bits);
    v[i] = in < kFloor ? 0.0 : scaled;
  }
}

}  // namespace tosa
