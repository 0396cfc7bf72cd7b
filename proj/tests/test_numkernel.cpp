#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "deepe/matrix.hpp"
#include "deepe/rng.hpp"
#include "test_util.hpp"

using namespace deepe;
using deepe::test::max_diff;
using deepe::test::naive_matmul;
using deepe::test::random_matrix;

TEST_CASE("rng is reproducible and streams are independent") {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> xa, xb, xc;
  for (int i = 0; i < 8; ++i) {
    xa.push_back(a.next_u64());
    xb.push_back(b.next_u64());
    xc.push_back(c.next_u64());
  }
  CHECK(xa == xb);
  CHECK(xa != xc);

  const Rng root(5);
  Rng s1 = root.split(1), s1b = root.split(1), s2 = root.split(2);
  const auto v1 = s1.next_u64();
  CHECK(v1 == s1b.next_u64());
  CHECK(v1 != s2.next_u64());
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng below covers the range uniformly") {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("shuffle is a permutation and seed-determined") {
  std::vector<int> a(100);
  std::iota(a.begin(), a.end(), 0);
  std::vector<int> b(a);
  Rng r1(9), r2(9);
  shuffle(std::span<int>(a), r1);
  shuffle(std::span<int>(b), r2);
  CHECK(a == b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  CHECK(!std::is_sorted(a.begin(), a.end()));
}

TEST_CASE("matmul: 2x2 worked example") {
  const Matrix<double> a(2, 2, {1, 2, 3, 4});
  const Matrix<double> b(2, 2, {5, 6, 7, 8});
  CHECK(matmul(a, b) == Matrix<double>(2, 2, {19, 22, 43, 50}));
  CHECK(matmul(Matrix<double>::identity(2), b) == b);
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  const Matrix<double> a(2, 3), b(4, 5);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("matmul variants match a naive oracle on random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(40), k = 1 + rng.below(300), n = 1 + rng.below(300);
    const auto a = random_matrix<double>(m, k, rng);
    const auto b = random_matrix<double>(k, n, rng);
    const auto expected = naive_matmul(a, b);
    CHECK(max_diff(matmul(a, b), expected) < 1e-10);
    CHECK(max_diff(matmul_nt(a, transpose(b)), expected) < 1e-10);
    CHECK(max_diff(matmul_tn(transpose(a), b), expected) < 1e-10);
  }
  // float kernels agree with the double oracle to float accuracy
  const auto a = random_matrix<float>(17, 260, rng);
  const auto b = random_matrix<float>(260, 33, rng);
  CHECK(max_diff(matmul(a, b), naive_matmul(a, b)) < 1e-3);
}

TEST_CASE("matmul propagates NaN") {
  Matrix<double> a(2, 2, {0, 0, 0, 0});
  Matrix<double> b(2, 2, {std::nan(""), 1, 1, 1});
  CHECK(!all_finite(matmul(a, b)));
}

TEST_CASE("elementwise helpers") {
  Matrix<double> a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix<double> row(1, 3, {10, 20, 30});
  CHECK(column_sums(a) == Matrix<double>(1, 3, {5, 7, 9}));
  Matrix<double> b = a;
  add_row_inplace(b, row);
  CHECK(b == Matrix<double>(2, 3, {11, 22, 33, 14, 25, 36}));
  CHECK(hadamard(a, a) == Matrix<double>(2, 3, {1, 4, 9, 16, 25, 36}));
  const auto c = concat_cols(a, Matrix<double>(2, 1, {7, 8}));
  CHECK(c == Matrix<double>(2, 4, {1, 2, 3, 7, 4, 5, 6, 8}));
  CHECK(slice_cols(c, 1, 2) == Matrix<double>(2, 2, {2, 3, 5, 6}));
  CHECK(transpose(a) == Matrix<double>(3, 2, {1, 4, 2, 5, 3, 6}));
  scale_inplace(b, 0.5);
  CHECK(b(0, 0) == 5.5);
  CHECK_THROWS_AS(add_inplace(a, Matrix<double>(3, 2)), ShapeError);
}

TEST_CASE("gather and scatter are adjoint") {
  Rng rng(2);
  const auto table = random_matrix<double>(6, 4, rng);
  const std::vector<int> ids = {3, 0, 3, 5};
  const auto g = gather_rows(table, ids);
  CHECK(g(0, 1) == table(3, 1));
  CHECK(g(3, 2) == table(5, 2));
  const auto up = random_matrix<double>(4, 4, rng);
  Matrix<double> acc(6, 4);
  scatter_add_rows(acc, ids, up);
  // <gather(T), U> == <T, scatter(U)>
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += g.values()[i] * up.values()[i];
  for (std::size_t i = 0; i < table.size(); ++i) rhs += table.values()[i] * acc.values()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  const std::vector<int> bad = {6};
  CHECK_THROWS_AS(gather_rows(table, bad), std::out_of_range);
}

TEST_CASE("xavier normal init has variance 2/(fan_in+fan_out)") {
  Rng rng(1);
  const auto w = xavier_normal_init<double>(400, 600, rng);
  double s = 0, s2 = 0;
  for (double v : w.values()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = s2 / n - (s / n) * (s / n);
  CHECK(var == doctest::Approx(2.0 / 1000.0).epsilon(0.02));
  CHECK(std::abs(s / n) < 1e-3);
}

TEST_CASE("relu forward/backward match finite differences away from the kink") {
  Rng rng(4);
  auto x = random_matrix<double>(5, 7, rng);
  for (auto& v : x.values())
    if (std::abs(v) < 1e-3) v = 0.5;
  const auto up = random_matrix<double>(5, 7, rng);
  const auto g = relu_backward(x, up);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xp = x, xm = x;
    xp.values()[i] += h;
    xm.values()[i] -= h;
    const double fd = (relu_forward(xp).values()[i] - relu_forward(xm).values()[i]) / (2 * h) *
                      up.values()[i];
    CHECK(g.values()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  // subgradient at exactly zero is 0
  const Matrix<double> z(1, 1, {0.0});
  CHECK(relu_backward(z, Matrix<double>(1, 1, {3.0}))(0, 0) == 0.0);
}

TEST_CASE("cast round trip") {
  const Matrix<double> a(1, 3, {0.5, -1.25, 3.0});
  CHECK(cast<double>(cast<float>(a)) == a);
}
