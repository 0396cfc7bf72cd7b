#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepe/rng.hpp"

namespace deepe {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major 2-D array. The batch dimension is rows.
//
// Instantiated for float (training) and double (gradient checking).
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values);
  Matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values)
      : Matrix(rows, cols, std::vector<T>(values)) {}

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const T> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(T value);
  void set_zero() { fill(T{0}); }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Throws ShapeError naming both shapes when they differ.
template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b,
                        const char* what);

// a·b
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);
// a·bᵀ
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);
// aᵀ·b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> transpose(const Matrix<T>& a);

template <typename T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src);
template <typename T>
void scale_inplace(Matrix<T>& dst, T factor);
// dst[r][c] += row[c] for every r.
template <typename T>
void add_row_inplace(Matrix<T>& dst, const Matrix<T>& row);
// 1×cols matrix of column sums.
template <typename T>
Matrix<T> column_sums(const Matrix<T>& a);
template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b);

// [a | b] along columns.
template <typename T>
Matrix<T> concat_cols(const Matrix<T>& a, const Matrix<T>& b);
// Columns [first, first + count).
template <typename T>
Matrix<T> slice_cols(const Matrix<T>& a, std::size_t first, std::size_t count);
template <typename T>
Matrix<T> gather_rows(const Matrix<T>& table, std::span<const int> ids);
// table[ids[i]] += rows[i]
template <typename T>
void scatter_add_rows(Matrix<T>& table, std::span<const int> ids,
                      const Matrix<T>& rows);

// Entries ~ normal(0, sqrt(2 / (rows + cols))).
template <typename T>
Matrix<T> xavier_normal_init(std::size_t rows, std::size_t cols, Rng& rng);

template <typename T>
Matrix<T> relu_forward(const Matrix<T>& x);
// Passes upstream where x > 0; the subgradient at 0 is 0.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& upstream);

template <typename T>
bool all_finite(const Matrix<T>& a);
template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b);

template <typename To, typename From>
Matrix<To> cast(const Matrix<From>& a) {
  std::vector<To> out(a.size());
  const auto src = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Matrix<To>(a.rows(), a.cols(), std::move(out));
}

}  // namespace deepe
