#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "deepe/data.hpp"
#include "deepe/matrix.hpp"
#include "deepe/rng.hpp"

namespace deepe::test {

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix<T> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<T>(scale * rng.normal());
  return m;
}

// Naive triple loop, the oracle for the tiled kernels.
template <typename T>
Matrix<double> naive_matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k)
        s += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
      out(i, j) = s;
    }
  return out;
}

template <typename T, typename U>
double max_diff(const Matrix<T>& a, const Matrix<U>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, std::abs(static_cast<double>(a.values()[i]) -
                             static_cast<double>(b.values()[i])));
  return d;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("deepe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random named triples over at most `entities` entities and `relations`
// relations. Duplicates and self loops are allowed on purpose.
inline std::vector<NamedTriple> random_triples(Rng& rng, std::size_t count, std::size_t entities,
                                               std::size_t relations) {
  std::vector<NamedTriple> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({"e" + std::to_string(rng.below(entities)),
                   "r" + std::to_string(rng.below(relations)),
                   "e" + std::to_string(rng.below(entities))});
  }
  return out;
}

inline Dataset random_dataset(Rng& rng, std::size_t entities = 30, std::size_t relations = 4) {
  const std::size_t n = 20 + rng.below(60);
  return Dataset::from_named(random_triples(rng, n, entities, relations),
                             random_triples(rng, 1 + rng.below(10), entities, relations),
                             random_triples(rng, 1 + rng.below(15), entities, relations));
}

}  // namespace deepe::test
