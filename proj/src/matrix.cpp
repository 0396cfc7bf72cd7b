#include "deepe/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace deepe {

template <typename T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "Matrix: " << data_.size() << " values do not fill a " << rows
        << "x" << cols << " matrix";
    throw ShapeError(msg.str());
  }
}

template <typename T>
Matrix<T> Matrix<T>::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
  return m;
}

template <typename T>
Matrix<T> Matrix<T>::row_vector(std::span<const T> values) {
  return Matrix(1, values.size(), std::vector<T>(values.begin(), values.end()));
}

template <typename T>
void Matrix<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
std::string Matrix<T>::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     a.shape_string() + " vs " + b.shape_string());
  }
}

namespace {

constexpr std::size_t kTileCols = 256;
constexpr std::size_t kTileDepth = 128;

// out += a·b where a is n×k (row stride lda), b is k×m, out is n×m.
// Tiled over columns of b so a tile of b stays in cache across rows of a.
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* out, std::size_t n,
                     std::size_t k, std::size_t m) {
  for (std::size_t j0 = 0; j0 < m; j0 += kTileCols) {
    const std::size_t j1 = std::min(m, j0 + kTileCols);
    for (std::size_t p0 = 0; p0 < k; p0 += kTileDepth) {
      const std::size_t p1 = std::min(k, p0 + kTileDepth);
      for (std::size_t i = 0; i < n; ++i) {
        T* out_row = out + i * m;
        const T* a_row = a + i * k;
        for (std::size_t p = p0; p < p1; ++p) {
          const T scale = a_row[p];
          const T* b_row = b + p * m;
          for (std::size_t j = j0; j < j1; ++j) out_row[j] += scale * b_row[j];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_string() +
                     " x " + b.shape_string());
  }
  Matrix<T> out(a.rows(), b.cols());
  gemm_accumulate(a.values().data(), b.values().data(), out.values().data(),
                  a.rows(), a.cols(), b.cols());
  return out;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ " + a.shape_string() +
                     " x " + b.shape_string() + "^T");
  }
  return matmul(a, transpose(b));
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dimensions differ " + a.shape_string() +
                     "^T x " + b.shape_string());
  }
  Matrix<T> out(a.cols(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const auto a_row = a.row(p);
    const auto b_row = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T scale = a_row[i];
      T* out_row = out.values().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += scale * b_row[j];
    }
  }
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

template <typename T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src) {
  require_same_shape(dst, src, "add_inplace");
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
void scale_inplace(Matrix<T>& dst, T factor) {
  for (auto& v : dst.values()) v *= factor;
}

template <typename T>
void add_row_inplace(Matrix<T>& dst, const Matrix<T>& row) {
  if (row.rows() != 1 || row.cols() != dst.cols()) {
    throw ShapeError("add_row_inplace: cannot broadcast " + row.shape_string() +
                     " over " + dst.shape_string());
  }
  const auto b = row.values();
  for (std::size_t r = 0; r < dst.rows(); ++r) {
    auto out = dst.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += b[c];
  }
}

template <typename T>
Matrix<T> column_sums(const Matrix<T>& a) {
  Matrix<T> out(1, a.cols());
  auto o = out.values();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) o[c] += row[c];
  }
  return out;
}

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "hadamard");
  Matrix<T> out(a.rows(), a.cols());
  auto o = out.values();
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return out;
}

template <typename T>
Matrix<T> concat_cols(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ " + a.shape_string() +
                     " vs " + b.shape_string());
  }
  Matrix<T> out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols());
  }
  return out;
}

template <typename T>
Matrix<T> slice_cols(const Matrix<T>& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " +
                     a.shape_string());
  }
  Matrix<T> out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto src = a.row(r).subspan(first, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& table, std::span<const int> ids) {
  Matrix<T> out(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                              " outside table " + table.shape_string());
    }
    const auto src = table.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
void scatter_add_rows(Matrix<T>& table, std::span<const int> ids,
                      const Matrix<T>& rows) {
  if (rows.rows() != ids.size() || rows.cols() != table.cols()) {
    throw ShapeError("scatter_add_rows: " + rows.shape_string() +
                     " rows for " + std::to_string(ids.size()) +
                     " ids into " + table.shape_string());
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto dst = table.row(static_cast<std::size_t>(ids[i]));
    const auto src = rows.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
}

template <typename T>
Matrix<T> xavier_normal_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  Matrix<T> out(rows, cols);
  for (auto& v : out.values()) v = static_cast<T>(stddev * rng.normal());
  return out;
}

template <typename T>
Matrix<T> relu_forward(const Matrix<T>& x) {
  Matrix<T> out(x.rows(), x.cols());
  auto o = out.values();
  const auto in = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
  return out;
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& upstream) {
  require_same_shape(x, upstream, "relu_backward");
  Matrix<T> out(x.rows(), x.cols());
  auto o = out.values();
  const auto in = x.values();
  const auto up = upstream.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T{0} ? up[i] : T{0};
  return out;
}

template <typename T>
bool all_finite(const Matrix<T>& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T worst{0};
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, static_cast<T>(std::abs(a.values()[i] - b.values()[i])));
  return worst;
}

#define DEEPE_INSTANTIATE_MATRIX(T)                                          \
  template class Matrix<T>;                                                  \
  template void require_same_shape(const Matrix<T>&, const Matrix<T>&,       \
                                   const char*);                             \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);             \
  template Matrix<T> matmul_nt(const Matrix<T>&, const Matrix<T>&);          \
  template Matrix<T> matmul_tn(const Matrix<T>&, const Matrix<T>&);          \
  template Matrix<T> transpose(const Matrix<T>&);                            \
  template void add_inplace(Matrix<T>&, const Matrix<T>&);                   \
  template void scale_inplace(Matrix<T>&, T);                                \
  template void add_row_inplace(Matrix<T>&, const Matrix<T>&);               \
  template Matrix<T> column_sums(const Matrix<T>&);                          \
  template Matrix<T> hadamard(const Matrix<T>&, const Matrix<T>&);           \
  template Matrix<T> concat_cols(const Matrix<T>&, const Matrix<T>&);        \
  template Matrix<T> slice_cols(const Matrix<T>&, std::size_t, std::size_t); \
  template Matrix<T> gather_rows(const Matrix<T>&, std::span<const int>);    \
  template void scatter_add_rows(Matrix<T>&, std::span<const int>,           \
                                 const Matrix<T>&);                          \
  template Matrix<T> xavier_normal_init(std::size_t, std::size_t, Rng&);     \
  template Matrix<T> relu_forward(const Matrix<T>&);                         \
  template Matrix<T> relu_backward(const Matrix<T>&, const Matrix<T>&);      \
  template bool all_finite(const Matrix<T>&);                                \
  template T max_abs_diff(const Matrix<T>&, const Matrix<T>&);

DEEPE_INSTANTIATE_MATRIX(float)
DEEPE_INSTANTIATE_MATRIX(double)

#undef DEEPE_INSTANTIATE_MATRIX

}  // namespace deepe
