// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "lttd/tensor.hpp"
#include "test_util.hpp"

using lttd::DenseTensor;
using lttd::Shape;

TEST_CASE("Shape rejects invalid extents") {
  CHECK_THROWS_AS(Shape({0}), lttd::shape_error);
  CHECK_THROWS_AS(Shape({3, 0, 2}), lttd::shape_error);
  // element count guard: 2^21 * 2^21 = 2^42 > 2^40
  CHECK_THROWS_AS(Shape({std::size_t{1} << 21, std::size_t{1} << 21}),
                  lttd::shape_error);
  CHECK(Shape({2, 3, 4}).element_count() == 24);
  CHECK(Shape{}.element_count() == 1);  // scalar
}

TEST_CASE("DenseTensor constructors validate data") {
  CHECK_THROWS_AS(DenseTensor(Shape{2}, {1.0, 2.0, 3.0}), lttd::shape_error);
  CHECK_THROWS_AS(
      DenseTensor(Shape{2}, {1.0, std::numeric_limits<double>::quiet_NaN()}),
      lttd::shape_error);
  CHECK_THROWS_AS(
      DenseTensor(Shape{2}, {std::numeric_limits<double>::infinity(), 0.0}),
      lttd::shape_error);
  DenseTensor t{Shape{2, 2}, {1, 2, 3, 4}};
  CHECK(t(1, 0) == 3.0);
}

TEST_CASE("outer_product examples") {
  auto r = lttd::outer_product({DenseTensor::vector({1, 2}),
                                DenseTensor::vector({3, 4})});
  CHECK(r == DenseTensor::matrix(2, 2, {3, 4, 6, 8}));

  auto s = lttd::outer_product({DenseTensor::vector({1}),
                                DenseTensor::vector({5})});
  CHECK(s == DenseTensor::matrix(1, 1, {5}));

  auto ind = lttd::outer_product({DenseTensor::vector({1, 0}),
                                  DenseTensor::vector({0, 1}),
                                  DenseTensor::vector({1, 1})});
  REQUIRE(ind.shape() == Shape{2, 2, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        const double want = (i == 0 && j == 1) ? 1.0 : 0.0;
        CHECK(ind(i, j, k) == want);
      }
}

TEST_CASE("outer_product rejects bad inputs") {
  CHECK_THROWS_AS(lttd::outer_product({DenseTensor::vector({1, 2})}),
                  lttd::shape_error);
  CHECK_THROWS_AS(lttd::outer_product({DenseTensor::matrix(1, 2, {1, 2}),
                                       DenseTensor::vector({1})}),
                  lttd::shape_error);
}

TEST_CASE("contract_leading examples") {
  auto off_diag = lttd::contract_leading(
      DenseTensor::identity(2),
      {DenseTensor::vector({1, 0}), DenseTensor::vector({0, 1})});
  REQUIRE(off_diag.ndim() == 0);
  CHECK(off_diag[0] == 0.0);

  DenseTensor ones{Shape{2, 2, 3}, std::vector<double>(12, 1.0)};
  auto counted = lttd::contract_leading(
      ones, {DenseTensor::vector({1, 1}), DenseTensor::vector({1, 1})});
  CHECK(counted == DenseTensor::vector({4, 4, 4}));
}

TEST_CASE("contract_leading with basis vectors picks a fiber") {
  lttd::CounterRng rng(7, "fiber");
  auto t = testutil::random_tensor(Shape{3, 3, 3, 2}, rng);
  auto e = [](std::size_t i) {
    std::vector<double> v(3, 0.0);
    v[i] = 1.0;
    return DenseTensor::vector(v);
  };
  auto fiber = lttd::contract_leading(t, {e(0), e(1), e(2)});
  REQUIRE(fiber.shape() == Shape{2});
  // direct indexing oracle
  CHECK(fiber[0] == t(0, 1, 2, 0));
  CHECK(fiber[1] == t(0, 1, 2, 1));
}

TEST_CASE("contract_leading rejects length mismatch") {
  DenseTensor t{Shape{2, 3}};
  CHECK_THROWS_AS(lttd::contract_leading(t, {DenseTensor::vector({1, 2, 3})}),
                  lttd::shape_error);
  CHECK_THROWS_AS(
      lttd::contract_leading(t, {DenseTensor::vector({1, 2}),
                                 DenseTensor::vector({1, 2, 3}),
                                 DenseTensor::vector({1})}),
      lttd::shape_error);
}

TEST_CASE("matmul examples") {
  auto m = DenseTensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(lttd::matmul(DenseTensor::identity(2), m) == m);
  CHECK(lttd::matmul(DenseTensor::matrix(1, 2, {1, 2}),
                     DenseTensor::matrix(2, 1, {3, 4})) ==
        DenseTensor::matrix(1, 1, {11}));
  CHECK_THROWS_AS(lttd::matmul(DenseTensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}),
                               DenseTensor::matrix(2, 2, {1, 2, 3, 4})),
                  lttd::shape_error);
}

TEST_CASE("matmul matches triple-loop oracle") {
  lttd::CounterRng rng(11, "matmul");
  auto a = testutil::random_tensor(Shape{4, 3}, rng);
  auto b = testutil::random_tensor(Shape{3, 5}, rng);
  DenseTensor want{Shape{4, 5}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += a(i, k) * b(k, j);
      want(i, j) = acc;
    }
  CHECK(testutil::rel_err(lttd::matmul(a, b), want) <= 1e-15);
}

TEST_CASE("hadamard examples") {
  CHECK(lttd::hadamard({DenseTensor::vector({1, 2}),
                        DenseTensor::vector({3, 4})}) ==
        DenseTensor::vector({3, 8}));
  auto x = DenseTensor::vector({2.5, -1.25, 0.0});
  CHECK(lttd::hadamard({x, DenseTensor::vector({1, 1, 1})}) == x);
  CHECK(lttd::hadamard({DenseTensor::vector({1, 2}),
                        DenseTensor::vector({3, 4}),
                        DenseTensor::vector({5, 6})}) ==
        DenseTensor::vector({15, 48}));
  CHECK_THROWS_AS(lttd::hadamard({DenseTensor::vector({1, 2}),
                                  DenseTensor::vector({1, 2, 3})}),
                  lttd::shape_error);
}

TEST_CASE("vectorize examples") {
  CHECK(lttd::vectorize(DenseTensor::matrix(2, 2, {1, 2, 3, 4})) ==
        DenseTensor::vector({1, 2, 3, 4}));
  CHECK(lttd::vectorize(DenseTensor::matrix(1, 3, {7, 8, 9})) ==
        DenseTensor::vector({7, 8, 9}));
  CHECK(lttd::vectorize(lttd::outer_product({DenseTensor::vector({1, 2}),
                                             DenseTensor::vector({3, 4})})) ==
        DenseTensor::vector({3, 4, 6, 8}));
  CHECK_THROWS_AS(lttd::vectorize(DenseTensor::vector({1, 2})),
                  lttd::shape_error);
}

TEST_CASE("vectorize/reshape is a bijection") {
  lttd::CounterRng rng(3, "reshape");
  auto m = testutil::random_tensor(Shape{4, 7}, rng);
  auto back = lttd::reshape(lttd::vectorize(m), m.shape());
  CHECK(back == m);  // exact, bit for bit
}

TEST_CASE("bilinearity: contraction of an outer product factors") {
  lttd::CounterRng rng(5, "bilinearity");
  for (int trial = 0; trial < 50; ++trial) {
    auto a = testutil::random_tensor(Shape{3}, rng);
    auto b = testutil::random_tensor(Shape{4}, rng);
    auto c = testutil::random_tensor(Shape{2}, rng);
    auto ap = testutil::random_tensor(Shape{3}, rng);
    auto bp = testutil::random_tensor(Shape{4}, rng);
    auto cp = testutil::random_tensor(Shape{2}, rng);
    auto lhs = lttd::contract_leading(lttd::outer_product({a, b, c}),
                                      {ap, bp, cp});
    auto dot = [](const DenseTensor& x, const DenseTensor& y) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
      return acc;
    };
    const double want = dot(a, ap) * dot(b, bp) * dot(c, cp);
    REQUIRE(lhs.ndim() == 0);
    CHECK(testutil::scalar_rel_err(lhs[0], want) <= 1e-12);
  }
}

TEST_CASE("hadamard is commutative and associative within tolerance") {
  lttd::CounterRng rng(9, "hadamard-props");
  for (int trial = 0; trial < 20; ++trial) {
    auto x = testutil::random_tensor(Shape{6}, rng);
    auto y = testutil::random_tensor(Shape{6}, rng);
    auto z = testutil::random_tensor(Shape{6}, rng);
    auto xyz = lttd::hadamard({x, y, z});
    auto zyx = lttd::hadamard({z, y, x});
    auto nested = lttd::hadamard({lttd::hadamard({x, y}), z});
    CHECK(testutil::rel_err(zyx, xyz) <= 1e-12);
    CHECK(testutil::rel_err(nested, xyz) <= 1e-12);
  }
}

TEST_CASE("kernels are deterministic") {
  lttd::CounterRng rng(13, "determinism");
  auto t = testutil::random_tensor(Shape{3, 4, 5}, rng);
  auto v1 = testutil::random_tensor(Shape{3}, rng);
  auto v2 = testutil::random_tensor(Shape{4}, rng);
  auto first = lttd::contract_leading(t, {v1, v2});
  auto second = lttd::contract_leading(t, {v1, v2});
  CHECK(first == second);  // bit-identical

  auto a = testutil::random_tensor(Shape{5, 6}, rng);
  auto b = testutil::random_tensor(Shape{6, 2}, rng);
  CHECK(lttd::matmul(a, b) == lttd::matmul(a, b));
}
