#include "citeflow/tensor.hpp"

#include <cstring>
#include <random>

#include "citeflow/common.hpp"
#include "doctest.h"

using namespace citeflow;

namespace {

// Entries have magnitude in [lo, hi] with random sign; keeping them away from
// zero keeps relu and |.| kinks out of finite-difference reach.
Matrix random_matrix(std::mt19937_64& rng, int r, int c, double lo = 0.1, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) {
    double mag = uniform_in(rng, lo, hi);
    v = (rng() & 1) ? mag : -mag;
  }
  return m;
}

SparseMatrix random_sparse(std::mt19937_64& rng, int r, int c, double fill = 0.4) {
  std::vector<std::tuple<int, int, double>> trips;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      if (uniform01(rng) < fill) trips.emplace_back(i, j, uniform_in(rng, 0.1, 1.0));
  if (trips.empty()) trips.emplace_back(0, 0, 0.5);
  return SparseMatrix::from_triplets(r, c, std::move(trips));
}

// Scalar wrapper sum(out * R): coordinate-dependent gradients catch
// transposition mistakes that sum(out) alone would miss.
Var weighted_sum(Tape& t, Var out, const Matrix& r) {
  return t.reduce_sum(t.mul(out, t.input(r)));
}

}  // namespace

TEST_CASE("matmul with identity returns the operand") {
  Tape t;
  Matrix eye(2, 2, {1, 0, 0, 1});
  Matrix b(2, 3, {1, 2, 3, 4, 5, 6});
  Var c = t.matmul(t.input(eye), t.input(b));
  CHECK(t.value(c).data == b.data);
}

TEST_CASE("spmm hand example") {
  auto s = SparseMatrix::from_triplets(2, 2, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}});
  Tape t;
  Var h = t.input(Matrix(2, 1, {1, 3}));
  Var out = t.spmm(s, h);
  CHECK(t.value(out).data == std::vector<double>{2, 2});
}

TEST_CASE("reduce_mean_abs hand example") {
  Tape t;
  Var a = t.input(Matrix(1, 2, {1, -2}));
  Var m = t.reduce_mean_abs(a, Matrix(1, 2, 1.0));
  CHECK(t.value(m).data[0] == doctest::Approx(1.5));
}

TEST_CASE("backward of sum gives all-ones") {
  Tape t;
  Var w = t.param(Matrix(2, 2, {3, -1, 0.5, 2}));
  t.backward(t.reduce_sum(w));
  CHECK(t.grad(w).data == std::vector<double>(4, 1.0));
}

TEST_CASE("mean-abs subgradient entries lie in {-1/N, 0, +1/N}") {
  Tape t;
  Var w = t.param(Matrix(2, 2, {1, 2, 3, 4}));
  Var y = t.input(Matrix(2, 2, {0, 2, 5, 4}));  // residuals 1, 0, -2, 0
  Var loss = t.reduce_mean_abs(t.sub(w, y), Matrix(2, 2, 1.0));
  t.backward(loss);
  CHECK(t.grad(w).data == std::vector<double>{0.25, 0.0, -0.25, 0.0});
}

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
  Matrix p(2, 2, {1, 2, 3, 4});
  Matrix g(2, 2);
  AdamState adam;
  adam.step({&p}, {&g});
  CHECK(p.data == std::vector<double>{1, 2, 3, 4});
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam first step moves a scalar by about minus lr") {
  Matrix p = Matrix::scalar(5.0);
  Matrix g = Matrix::scalar(1.0);
  AdamState adam;
  adam.step({&p}, {&g});
  // bias-corrected m-hat / sqrt(v-hat) is exactly 1, so the step is
  // lr / (1 + eps)
  CHECK(std::fabs(p.data[0] - (5.0 - 0.001)) < 1e-10);
}

TEST_CASE("adam decreases a parameter under constant positive gradient") {
  Matrix p = Matrix::scalar(1.0);
  Matrix g = Matrix::scalar(0.3);
  AdamState adam;
  double prev = p.data[0];
  for (int i = 0; i < 5; ++i) {
    adam.step({&p}, {&g});
    CHECK(p.data[0] < prev);
    prev = p.data[0];
  }
}

TEST_CASE("adam moments decay under zero gradient after a real step") {
  Matrix p = Matrix::scalar(0.0);
  Matrix g1 = Matrix::scalar(1.0);
  Matrix g0 = Matrix::scalar(0.0);
  AdamState adam;
  adam.step({&p}, {&g1});
  double m1 = adam.first_moments()[0].data[0];
  double v1 = adam.second_moments()[0].data[0];
  CHECK(m1 == doctest::Approx(0.1));
  CHECK(v1 == doctest::Approx(0.001));
  adam.step({&p}, {&g0});
  CHECK(adam.first_moments()[0].data[0] == doctest::Approx(0.9 * m1));
  CHECK(adam.second_moments()[0].data[0] == doctest::Approx(0.999 * v1));
}

TEST_CASE("grad_check on a closed form square") {
  TapeFn f = [](Tape& t, const std::vector<Var>& vs) {
    return t.reduce_sum(t.mul(vs[0], vs[0]));
  };
  CHECK(grad_check(f, {Matrix::scalar(3.0)}) < 1e-6);

  Tape t;
  Var x = t.param(Matrix::scalar(3.0));
  t.backward(t.reduce_sum(t.mul(x, x)));
  CHECK(t.grad(x).data[0] == doctest::Approx(6.0));
}

TEST_CASE("grad_check on mean-abs away from kinks") {
  TapeFn f = [](Tape& t, const std::vector<Var>& vs) {
    return t.reduce_mean_abs(t.sub(vs[0], vs[1]), Matrix(2, 3, 1.0));
  };
  std::mt19937_64 rng(7);
  Matrix w = random_matrix(rng, 2, 3);
  Matrix y(2, 3, 5.0);  // residuals far from zero
  CHECK(grad_check(f, {w, y}) < 1e-6);
}

TEST_CASE("every primitive op passes finite differences at random points") {
  std::mt19937_64 rng(123);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a = random_matrix(rng, 3, 4);
    Matrix b = random_matrix(rng, 4, 2);
    Matrix c = random_matrix(rng, 3, 4);
    Matrix bias = random_matrix(rng, 1, 4);
    Matrix r34 = random_matrix(rng, 3, 4);
    Matrix r32 = random_matrix(rng, 3, 2);
    Matrix r38 = random_matrix(rng, 3, 8);
    Matrix r44 = random_matrix(rng, 4, 4);
    SparseMatrix sp = random_sparse(rng, 4, 3);
    Matrix mask(3, 4);
    int on = 0;
    for (double& v : mask.data)
      if (uniform01(rng) < 0.6) {
        v = 1.0;
        ++on;
      }
    if (on == 0) mask.data[0] = 1.0;

    std::vector<std::pair<const char*, TapeFn>> cases = {
        {"matmul",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.matmul(v[0], v[1]), r32);
         }},
        {"spmm",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.spmm(sp, v[0]), r44);
         }},
        {"add",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.add(v[0], v[2]), r34);
         }},
        {"add_bias",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.add(v[0], v[3]), r34);
         }},
        {"sub",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.sub(v[0], v[2]), r34);
         }},
        {"mul",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.mul(v[0], v[2]), r34);
         }},
        {"relu",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.relu(v[0]), r34);
         }},
        {"sigmoid",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.sigmoid(v[0]), r34);
         }},
        {"tanh",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.tanh(v[0]), r34);
         }},
        {"concat_cols",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted_sum(t, t.concat_cols({v[0], v[2]}), r38);
         }},
        {"gather_rows",
         [&](Tape& t, const std::vector<Var>& v) {
           // duplicate index exercises scatter accumulation
           return weighted_sum(t, t.gather_rows(v[0], {2, 0, 2}), r34);
         }},
        {"reduce_sum",
         [&](Tape& t, const std::vector<Var>& v) { return t.reduce_sum(v[0]); }},
        {"reduce_mean_abs",
         [&](Tape& t, const std::vector<Var>& v) {
           return t.reduce_mean_abs(v[0], mask);
         }},
    };
    for (auto& [name, fn] : cases) {
      INFO("op: " << name << " trial " << trial);
      double err = grad_check(fn, {a, b, c, bias});
      CHECK(err < 1e-4);
      worst = std::max(worst, err);
    }
  }
  MESSAGE("worst relative error over all ops/trials: " << worst);
}

TEST_CASE("spmm equals densified matmul exactly") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    SparseMatrix s = random_sparse(rng, 6, 6, 0.35);
    Matrix h = random_matrix(rng, 6, 4);
    Tape t;
    Var hv = t.input(h);
    Var out_sparse = t.spmm(s, hv);
    Var out_dense = t.matmul(t.input(s.to_dense()), hv);
    CHECK(t.value(out_sparse).data == t.value(out_dense).data);
  }
}

TEST_CASE("repeated forward and backward are bit-identical") {
  auto run = [](std::vector<double>& val, std::vector<double>& grad) {
    std::mt19937_64 rng(99);
    Matrix x = random_matrix(rng, 5, 3);
    Matrix w = random_matrix(rng, 3, 3);
    SparseMatrix s = random_sparse(rng, 5, 5, 0.5);
    Tape t;
    Var xv = t.param(x);
    Var h = t.tanh(t.spmm(s, t.matmul(xv, t.input(w))));
    Var loss = t.reduce_mean_abs(h, Matrix(5, 3, 1.0));
    t.backward(loss);
    val = t.value(loss).data;
    grad = t.grad(xv).data;
  };
  std::vector<double> v1, g1, v2, g2;
  run(v1, g1);
  run(v2, g2);
  CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * 8) == 0);
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * 8) == 0);
}

TEST_CASE("tape error paths") {
  SUBCASE("second backward on the same tape throws") {
    Tape t;
    Var x = t.param(Matrix::scalar(1.0));
    Var l = t.reduce_sum(x);
    t.backward(l);
    CHECK_THROWS_AS(t.backward(l), Error);
  }
  SUBCASE("non-scalar loss throws") {
    Tape t;
    Var x = t.param(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(x), ShapeError);
  }
  SUBCASE("matmul inner mismatch throws") {
    Tape t;
    Var a = t.input(Matrix(2, 3, 1.0));
    Var b = t.input(Matrix(2, 3, 1.0));
    CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
  }
  SUBCASE("non-finite input is rejected at the op boundary") {
    Tape t;
    Matrix bad(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(t.input(bad), NonFiniteError);
  }
  SUBCASE("overflow to infinity is rejected") {
    Tape t;
    Var a = t.input(Matrix::scalar(1e308));
    CHECK_THROWS_AS(t.mul(a, a), NonFiniteError);
  }
  SUBCASE("empty mask throws") {
    Tape t;
    Var a = t.input(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.reduce_mean_abs(a, Matrix(2, 2, 0.0)), Error);
  }
  SUBCASE("gather_rows range check") {
    Tape t;
    Var a = t.input(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.gather_rows(a, {0, 2}), ShapeError);
  }
  SUBCASE("grad before backward throws") {
    Tape t;
    Var a = t.param(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.grad(a), Error);
  }
  SUBCASE("tape is reusable after reset") {
    Tape t;
    Var x = t.param(Matrix::scalar(2.0));
    t.backward(t.reduce_sum(x));
    t.reset();
    CHECK(t.node_count() == 0);
    Var y = t.param(Matrix::scalar(4.0));
    t.backward(t.reduce_sum(y));
    CHECK(t.grad(y).data[0] == doctest::Approx(1.0));
  }
  SUBCASE("adam rejects mismatched parameter lists") {
    Matrix p(2, 2), g(2, 2);
    AdamState adam;
    CHECK_THROWS_AS(adam.step({&p}, {}), ShapeError);
    adam.step({&p}, {&g});
    Matrix p2(3, 3), g2(3, 3);
    CHECK_THROWS_AS(adam.step({&p2}, {&g2}), ShapeError);
  }
}

TEST_CASE("from_triplets builds sorted CSR and sums duplicates") {
  auto s = SparseMatrix::from_triplets(3, 3, {{2, 1, 1.0}, {0, 2, 2.0}, {0, 2, 0.5}, {1, 0, 3.0}});
  CHECK(s.nnz() == 3);
  CHECK(s.row_ptr == std::vector<int>{0, 1, 2, 3});
  CHECK(s.col_idx == std::vector<int>{2, 0, 1});
  CHECK(s.values == std::vector<double>{2.5, 3.0, 1.0});
  CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), ShapeError);
}

TEST_CASE("max_abs_asymmetry") {
  auto sym = SparseMatrix::from_triplets(2, 2, {{0, 1, 0.7}, {1, 0, 0.7}});
  CHECK(sym.max_abs_asymmetry() == 0.0);
  auto asym = SparseMatrix::from_triplets(2, 2, {{0, 1, 0.7}, {1, 0, 0.5}});
  CHECK(asym.max_abs_asymmetry() == doctest::Approx(0.2));
}
