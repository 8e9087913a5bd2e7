#include <cmath>
#include <cstring>

#include "doctest.h"
#include "otreg/gradcheck.hpp"
#include "otreg/kernels.hpp"
#include "otreg/loss.hpp"
#include "otreg/rng.hpp"
#include "otreg/tape.hpp"

using namespace otreg;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = lo + (hi - lo) * rng.unit();
  return m;
}

// Independent triple-loop product.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j)
      for (int k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul identity and selector") {
  Tape t;
  Var i2 = t.constant(Matrix::identity(2));
  Var m = t.constant({{1, 2}, {3, 4}});
  CHECK(max_abs_diff(matmul(i2, m).value(), m.value()) == 0.0);

  Var sel = t.constant({{1, 0}});
  Var col = t.constant({{5}, {7}});
  CHECK(matmul(sel, col).value()(0, 0) == 5.0);
}

TEST_CASE("matmul against triple-loop oracle") {
  Rng rng(11);
  Matrix a = random_matrix(3, 4, rng);
  Matrix b = random_matrix(4, 2, rng);
  Tape t;
  Matrix got = matmul(t.constant(a), t.constant(b)).value();
  CHECK(max_abs_diff(got, naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul shape mismatch") {
  Tape t;
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(2, 3));
  CHECK_THROWS_AS((void)matmul(a, b), dimension_error);
}

TEST_CASE("matmul associativity on random conformable triples") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix a = random_matrix(rng.uniform_int(1, 5), rng.uniform_int(1, 5), rng);
    Matrix b = random_matrix(a.cols(), rng.uniform_int(1, 5), rng);
    Matrix c = random_matrix(b.cols(), rng.uniform_int(1, 5), rng);
    Tape t;
    Var va = t.constant(a), vb = t.constant(b), vc = t.constant(c);
    Matrix left = matmul(matmul(va, vb), vc).value();
    Matrix right = matmul(va, matmul(vb, vc)).value();
    CHECK(max_abs_diff(left, right) < 1e-9);
  }
}

TEST_CASE("elementwise relu, exp, log") {
  Tape t;
  Var r = relu(t.constant({{-1, 2}}));
  CHECK(r.value()(0, 0) == 0.0);
  CHECK(r.value()(0, 1) == 2.0);

  CHECK(exp(t.constant({{0}})).value()(0, 0) == 1.0);

  Rng rng(13);
  Matrix a = random_matrix(4, 5, rng, -3.0, 3.0);
  Var round_trip = log(exp(t.constant(a)));
  CHECK(max_abs_diff(round_trip.value(), a) < 1e-12);

  CHECK_THROWS_AS((void)log(t.constant({{0.0}})), domain_error);
  CHECK_THROWS_AS((void)log(t.constant({{-1.0}})), domain_error);
  CHECK_THROWS_AS((void)add(t.constant(Matrix(2, 2)), t.constant(Matrix(2, 3))),
                  dimension_error);
}

TEST_CASE("cosine similarity anchors") {
  Tape t;
  CHECK(cosine_similarity(t.constant({{1, 0}}), t.constant({{0, 1}})).value()(0, 0) == 0.0);
  CHECK(cosine_similarity(t.constant({{2, 0}}), t.constant({{1, 0}})).value()(0, 0) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(t.constant({{1, 0}}), t.constant({{-1, 0}})).value()(0, 0) ==
        doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS((void)cosine_similarity(t.constant({{0, 0}}), t.constant({{1, 0}})),
                  domain_error);
}

TEST_CASE("cosine similarity invariant under positive row rescaling") {
  Rng rng(14);
  Matrix a = random_matrix(4, 6, rng);
  Matrix b = random_matrix(3, 6, rng);
  Matrix a_scaled = a;
  for (int i = 0; i < a.rows(); ++i) {
    const double s = 0.1 + 5.0 * rng.unit();
    for (int j = 0; j < a.cols(); ++j) a_scaled(i, j) *= s;
  }
  CHECK(max_abs_diff(cosine_similarity_matrix(a, b), cosine_similarity_matrix(a_scaled, b)) <
        1e-12);
}

TEST_CASE("backward: sum of entries gives all-ones") {
  Tape t;
  Rng rng(15);
  Var p = t.param(random_matrix(3, 4, rng));
  Var root = sum_all(p);
  const Var wrt[] = {p};
  auto grads = t.backward(root, wrt);
  CHECK(max_abs_diff(grads[0], Matrix::filled(3, 4, 1.0)) == 0.0);
}

TEST_CASE("backward: <p,p> gives 2p") {
  Tape t;
  Rng rng(16);
  Matrix pv = random_matrix(4, 1, rng);
  Var p = t.param(pv);
  Var root = sum_all(mul(p, p));
  const Var wrt[] = {p};
  auto grads = t.backward(root, wrt);
  Matrix expect(4, 1);
  for (int i = 0; i < 4; ++i) expect(i, 0) = 2.0 * pv(i, 0);
  CHECK(max_abs_diff(grads[0], expect) < 1e-15);
}

TEST_CASE("backward: untouched parameter gets zero gradient") {
  Tape t;
  Var used = t.param(Matrix::filled(2, 2, 1.0));
  Var unused = t.param(Matrix::filled(3, 1, 1.0));
  Var root = sum_all(used);
  const Var wrt[] = {used, unused};
  auto grads = t.backward(root, wrt);
  CHECK(max_abs_diff(grads[1], Matrix(3, 1)) == 0.0);
}

TEST_CASE("backward: non-scalar root rejected") {
  Tape t;
  Var p = t.param(Matrix::filled(2, 2, 1.0));
  const Var wrt[] = {p};
  CHECK_THROWS_AS((void)t.backward(p, wrt), domain_error);
}

TEST_CASE("grad_check: x^2 at x=3") {
  const Matrix params[] = {Matrix{{3.0}}};
  const double err = grad_check(
      [](Tape&, std::span<const Var> leaves) { return sum_all(mul(leaves[0], leaves[0])); },
      params, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check: transport cost and sparsity on a fixed 4x3 instance") {
  Rng rng(17);
  // Positive entries keep row sums away from zero under the FD perturbation.
  Matrix plan = random_matrix(4, 3, rng, 0.05, 1.0);
  Matrix cost = random_matrix(4, 3, rng, 0.0, 2.0);
  const Matrix params[] = {plan};

  const double err_cost = grad_check(
      [&](Tape& t, std::span<const Var> leaves) {
        return transport_cost(leaves[0], t.constant(cost));
      },
      params, 1e-5);
  CHECK(err_cost < 1e-4);

  const double err_spr = grad_check(
      [&](Tape&, std::span<const Var> leaves) { return sparsity_loss(leaves[0]); }, params,
      1e-5);
  CHECK(err_spr < 1e-4);
}

TEST_CASE("grad_check rejects bad step and non-finite objectives") {
  const Matrix params[] = {Matrix{{1.0}}};
  CHECK_THROWS_AS((void)grad_check([](Tape&, std::span<const Var> l) { return sum_all(l[0]); },
                                   params, 0.0),
                  domain_error);
  CHECK_THROWS_AS(
      (void)grad_check(
          [](Tape& t, std::span<const Var> l) {
            return sum_all(div(l[0], t.constant(Matrix{{0.0}})));
          },
          params, 1e-5),
      numeric_error);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng(18);
  struct Case {
    const char* name;
    ScalarBuilder build;
    double lo, hi;
  };
  Matrix weight = random_matrix(3, 4, rng);
  Matrix right = random_matrix(4, 3, rng);
  Matrix colv = random_matrix(3, 1, rng, 0.5, 1.5);
  Matrix rowv = random_matrix(1, 4, rng, 0.5, 1.5);
  Matrix weight2x4 = random_matrix(2, 4, rng);
  Matrix cos_target = random_matrix(2, 4, rng, 0.2, 1.0);
  Matrix weight3x2 = random_matrix(3, 2, rng);

  auto weighted = [&](Tape& t, Var x) { return sum_all(mul(x, t.constant(weight))); };

  const Case cases[] = {
      {"matmul", [&](Tape& t, std::span<const Var> l) {
         return sum_all(matmul(l[0], t.constant(right)));
       }, -1.0, 1.0},
      {"transpose", [&](Tape& t, std::span<const Var> l) {
         return sum_all(mul(transpose(l[0]), t.constant(right)));
       }, -1.0, 1.0},
      {"add", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, add(l[0], t.constant(weight)));
       }, -1.0, 1.0},
      {"sub", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, sub(l[0], t.constant(weight)));
       }, -1.0, 1.0},
      {"mul", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, mul(l[0], t.constant(weight)));
       }, -1.0, 1.0},
      {"div", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, div(t.constant(weight), l[0]));
       }, 0.5, 1.5},
      {"scale", [&](Tape& t, std::span<const Var> l) { return weighted(t, scale(l[0], -2.5)); },
       -1.0, 1.0},
      {"add_scalar", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, add_scalar(l[0], 0.7));
       }, -1.0, 1.0},
      {"exp", [&](Tape& t, std::span<const Var> l) { return weighted(t, exp(l[0])); }, -1.0,
       1.0},
      {"log", [&](Tape& t, std::span<const Var> l) { return weighted(t, log(l[0])); }, 0.5,
       2.0},
      {"sqrt", [&](Tape& t, std::span<const Var> l) { return weighted(t, sqrt(l[0])); }, 0.5,
       2.0},
      {"relu", [&](Tape& t, std::span<const Var> l) { return weighted(t, relu(l[0])); }, 0.1,
       1.0},
      {"clamp", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, clamp(l[0], -10.0, 10.0));
       }, -1.0, 1.0},
      {"add_col", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, add_col(l[0], t.param(colv)));
       }, -1.0, 1.0},
      {"add_row", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, add_row(l[0], t.param(rowv)));
       }, -1.0, 1.0},
      {"mul_col", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, mul_col(l[0], t.param(colv)));
       }, -1.0, 1.0},
      {"mul_row", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, mul_row(l[0], t.param(rowv)));
       }, -1.0, 1.0},
      {"lse_rows", [&](Tape&, std::span<const Var> l) { return sum_all(lse_rows(l[0])); },
       -1.0, 1.0},
      {"lse_cols", [&](Tape&, std::span<const Var> l) { return sum_all(lse_cols(l[0])); },
       -1.0, 1.0},
      {"normalize_rows", [&](Tape& t, std::span<const Var> l) {
         return weighted(t, normalize_rows(l[0]));
       }, 0.2, 1.0},
      {"combine_rows", [&](Tape& t, std::span<const Var> l) {
         Var combined = t.combine_rows(l[0], {{0, 1}, {2}});
         return sum_all(mul(combined, t.constant(weight2x4)));
       }, -1.0, 1.0},
      {"cosine", [&](Tape& t, std::span<const Var> l) {
         return sum_all(mul(cosine_similarity(l[0], t.constant(cos_target)),
                            t.constant(weight3x2)));
       }, 0.2, 1.0},
  };

  for (const Case& c : cases) {
    CAPTURE(c.name);
    const Matrix params[] = {random_matrix(3, 4, rng, c.lo, c.hi)};
    const double err = grad_check(c.build, params, 1e-6);
    CHECK_MESSAGE(err < 1e-4, c.name);
  }
}

TEST_CASE("tape replay determinism") {
  Rng rng(19);
  Matrix a = random_matrix(5, 4, rng);
  Matrix b = random_matrix(4, 3, rng);

  auto run = [&](Matrix& grad_out) {
    Tape t;
    Var p = t.param(a);
    Var root = sum_all(exp(scale(cosine_similarity(matmul(p, t.constant(b)),
                                                   t.constant(random_matrix(2, 3, rng))),
                                 0.5)));
    const Var wrt[] = {p};
    grad_out = t.backward(root, wrt)[0];
    return root.scalar();
  };

  // Reset the rng so both runs see identical constants.
  Rng saved = rng;
  Matrix g1, g2;
  const double v1 = run(g1);
  rng = saved;
  const double v2 = run(g2);
  CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
  CHECK(std::memcmp(g1.data().data(), g2.data().data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("serial and parallel kernels agree bitwise") {
  Rng rng(20);
  Matrix a = random_matrix(64, 48, rng);
  Matrix b = random_matrix(48, 32, rng);

  Matrix s(64, 32), p(64, 32);
  kernels::serial::matmul(a, b, s);
  kernels::par::matmul(a, b, p);
  CHECK(std::memcmp(s.data().data(), p.data().data(), s.size() * sizeof(double)) == 0);

  Matrix ls(64, 1), lp(64, 1);
  kernels::serial::lse_rows(a, ls);
  kernels::par::lse_rows(a, lp);
  CHECK(std::memcmp(ls.data().data(), lp.data().data(), ls.size() * sizeof(double)) == 0);

  Matrix cs(1, 48), cp(1, 48);
  kernels::serial::col_sums(a, cs);
  kernels::par::col_sums(a, cp);
  CHECK(std::memcmp(cs.data().data(), cp.data().data(), cs.size() * sizeof(double)) == 0);
}
