#pragma once

// Dense kernels shared by the merge pipeline and the toy encoder.
//
// Storage is 32-bit float; every reduction (dot products, norms, weighted
// averages, softmax sums) is carried out in double and rounded once on store.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tosa {

class Matrix {
 public:
  Matrix() = default;
  // Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  // Takes ownership of row-major data; throws on length mismatch or any
  // non-finite value.
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Rows of `m` selected by `indices`, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::uint32_t> indices);

Matrix transpose(const Matrix& m);

// a (n x k) times b (k x m).
Matrix matmul(const Matrix& a, const Matrix& b);

// Entry (i, j) = cos(a_i, b_j). Zero-norm rows are rejected with a
// degenerate_vector error naming the offending row; no epsilon is added.
Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b);

// Same contract with rows normalised first and products summed in float.
// Agrees with cosine_similarity_matrix to about 1e-6.
Matrix cosine_similarity_matrix_f32(const Matrix& a, const Matrix& b);

// weight * cos(a1_i, b1_j) + (1 - weight) * cos(a2_i, b2_j) in one float pass
// over concatenated, pre-scaled unit rows. a1/a2 and b1/b2 pair row for row.
Matrix blended_cosine_similarity_f32(const Matrix& a1, const Matrix& b1, const Matrix& a2,
                                     const Matrix& b2, double weight);

// Transformer sinusoidal encoding: component 2k = sin(index / 10000^(2k/dim)),
// component 2k+1 = cos(same).
std::vector<float> sinusoidal_encoding(std::size_t index, std::size_t dim);

// softmax(logits_ij + bias_j) per row, with max subtraction.
Matrix row_softmax_with_bias(const Matrix& logits, std::span<const float> bias);

struct WeightedRow {
  std::vector<float> features;
  float size = 0.0f;
};

// ((s_a f_a + s_b f_b) / (s_a + s_b), s_a + s_b).
WeightedRow weighted_row_average(std::span<const float> f_a, float s_a,
                                 std::span<const float> f_b, float s_b);

Matrix layer_norm(const Matrix& x, std::span<const float> gain, std::span<const float> bias,
                  double eps = 1e-6);

// Reductions over eight interleaved lanes. max_of of an empty span is -inf.
double max_of(std::span<const double> values);
double sum_of(std::span<const double> values);

// tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
double gelu_tanh(double x);
// Same function evaluated through exp_nonpositive_inplace.
void gelu_tanh_inplace(std::span<float> values);

// In-place exp(x) for x <= 0. Vectorizable; agrees with std::exp to a few ulp
// and flushes to 0 below -708.
void exp_nonpositive_inplace(std::span<double> values);

}  // namespace tosa
