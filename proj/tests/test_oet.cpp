#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "wfrflow/error.hpp"
#include "wfrflow/oet.hpp"

using namespace wfrflow;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

CostMatrix dense_cost(const Eigen::MatrixXd& C, const SupportMask& mask) {
  std::vector<Triplet> t;
  for (const auto& p : mask.allowed()) t.push_back({p.row, p.col, C(p.row, p.col)});
  return CostMatrix(static_cast<Index>(C.rows()), static_cast<Index>(C.cols()), std::move(t));
}

Eigen::MatrixXd to_dense(const SparseMatrix& m) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (const auto& t : m.entries()) D(t.row, t.col) = t.value;
  return D;
}

struct Instance {
  Eigen::MatrixXd C;
  Vec w0, w1;
  SupportMask mask;
};

Instance random_instance(std::mt19937_64& rng, int K0, int K1, double keep) {
  std::uniform_real_distribution<double> wd(0.5, 2.0), cd(0.0, 1.0), u(0.0, 1.0);
  Instance in;
  in.C = Eigen::MatrixXd::NullaryExpr(K0, K1, [&] { return cd(rng); });
  in.w0 = Vec::NullaryExpr(K0, [&] { return wd(rng); });
  in.w1 = Vec::NullaryExpr(K1, [&] { return wd(rng); });
  std::vector<IndexPair> allowed;
  for (int i = 0; i < K0; ++i)
    for (int j = 0; j < K1; ++j)
      if (u(rng) < keep) allowed.push_back({i, j});
  in.mask = SupportMask(K0, K1, allowed);
  return in;
}

}  // namespace

TEST_CASE("build_cost examples") {
  PointMatrix c0(3, 2), c1(3, 2);
  c0 << 0, 0, 1, 1, 0, 0;
  c1 << 0, 0, 1 + std::numbers::pi, 1, std::numbers::pi / 2, 0;
  const auto cost = build_cost(c0, c1, SupportMask(3, 3, {{0, 0}, {1, 1}, {2, 2}}), 1.0);
  CHECK(cost.value_at(0, 0) == 0.0);
  CHECK(std::isinf(cost.value_at(1, 1)));
  // ln 2 evaluated in extended precision as the reference.
  const long double ref = -2.0L * std::log(std::cos(std::numbers::pi_v<long double> / 4.0L));
  CHECK(std::abs(cost.value_at(2, 2) - static_cast<double>(ref)) < 1e-15);
  CHECK(cost.value_at(2, 2) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(cost.nnz() == 3);
  CHECK_THROWS_AS(build_cost(c0, c1, SupportMask::full(3, 3), 0.0), InvalidArgument);
  CHECK_THROWS_AS(build_cost(c0, PointMatrix(3, 3), SupportMask::full(3, 3), 1.0), InvalidArgument);
}

TEST_CASE("1x1 closed-form stationarity") {
  const auto mask = SupportMask::full(1, 1);
  for (double c : {0.0, 2.0 * std::log(2.0), 0.3}) {
    for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{3.0, 7.0}}) {
      CostMatrix cost(1, 1, {{0, 0, c}});
      const auto g = solve_masked_oet(cost, vec({a}), vec({b}), mask);
      const double expected = std::sqrt(a * b) * std::exp(-c / 2.0);
      CHECK(std::abs(g.value_at(0, 0) - expected) < 1e-6 * expected);
    }
  }
  CostMatrix half(1, 1, {{0, 0, 2.0 * std::log(2.0)}});
  CHECK(solve_masked_oet(half, vec({1}), vec({1}), mask).value_at(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("regularized 1x1 plan matches the closed form at each eps") {
  const double c = 0.7, a = 1.5, b = 0.8;
  CostMatrix cost(1, 1, {{0, 0, c}});
  for (double eps : {1.0, 0.1, 1e-3}) {
    SolverOptions o;
    o.initial_eps = o.final_eps = eps;
    for (auto method : {SolverMethod::Newton, SolverMethod::Sinkhorn}) {
      o.method = method;
      o.tolerance = 1e-13;
      o.max_iters = 200000;
      const auto g = solve_masked_oet(cost, vec({a}), vec({b}), SupportMask::full(1, 1), o);
      CHECK(g.value_at(0, 0) == doctest::Approx(std::sqrt(a * b) * std::exp(-c / (2.0 + eps))).epsilon(1e-10));
    }
  }
}

TEST_CASE("empty mask gives the zero coupling") {
  CostMatrix cost(2, 3, {{0, 0, 0.1}, {1, 2, 0.2}});
  const Vec w0 = vec({1.0, 2.0}), w1 = vec({0.5, 0.5, 3.0});
  const auto g = solve_masked_oet(cost, w0, w1, SupportMask(2, 3));
  CHECK(g.nnz() == 0);
  CHECK(oet_objective(g, cost, w0, w1) == doctest::Approx(7.0));
}

TEST_CASE("2x2 diagonal mask with zero cost") {
  CostMatrix cost(2, 2, {{0, 0, 0.0}, {1, 1, 0.0}, {0, 1, 0.0}, {1, 0, 0.0}});
  const Vec w = vec({1.0, 2.0});
  const SupportMask diag(2, 2, {{0, 0}, {1, 1}});
  const auto g = solve_masked_oet(cost, w, w, diag);
  CHECK(g.value_at(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(g.value_at(1, 1) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g.value_at(0, 1) == 0.0);
  CHECK(g.value_at(1, 0) == 0.0);
  // Brute-force grid over the two diagonal entries.
  double best = kInf, b0 = 0, b1 = 0;
  for (int p = 0; p <= 3000; ++p)
    for (int q = 0; q <= 3000; q += 1) {
      const double x = p * 1e-3, y = q * 1e-3;
      const double obj = oracle::kl(x, 1.0) * 2 + oracle::kl(y, 2.0) * 2;
      if (obj < best) best = obj, b0 = x, b1 = y;
    }
  CHECK(std::abs(b0 - g.value_at(0, 0)) <= 1e-3);
  CHECK(std::abs(b1 - g.value_at(1, 1)) <= 1e-3);
}

TEST_CASE("objective examples") {
  CostMatrix zero(1, 1, {{0, 0, 0.0}});
  const Vec one = vec({1.0});
  CHECK(oet_objective(SparseCoupling(1, 1), zero, one, one) == 2.0);
  CHECK(oet_objective(SparseCoupling(1, 1, {{0, 0, 1.0}}), zero, one, one) == 0.0);
  CostMatrix ln4(1, 1, {{0, 0, 2.0 * std::log(2.0)}});
  const double expected = 0.5 * 2.0 * std::log(2.0) + 2.0 * (0.5 * std::log(0.5) - 0.5 + 1.0);
  CHECK(oet_objective(SparseCoupling(1, 1, {{0, 0, 0.5}}), ln4, one, one) == doctest::Approx(expected).epsilon(1e-15));
  // ln 2 / 2 * 2 + (ln 0.5 + 1) sums to exactly 1.
  CHECK(expected == doctest::Approx(1.0).epsilon(1e-15));
  CostMatrix inf(1, 1, {{0, 0, kInf}});
  CHECK(std::isinf(oet_objective(SparseCoupling(1, 1, {{0, 0, 0.5}}), inf, one, one)));
  CHECK(std::isinf(oet_objective(SparseCoupling(1, 2, {{0, 1, 0.5}}), CostMatrix(1, 2, {{0, 0, 0.0}}), one,
                                 vec({1.0, 1.0}))));
}

TEST_CASE("solver rejects invalid weights and options") {
  CostMatrix cost(1, 1, {{0, 0, 0.0}});
  const auto mask = SupportMask::full(1, 1);
  CHECK_THROWS_AS(solve_masked_oet(cost, vec({0.0}), vec({1.0}), mask), InvalidArgument);
  CHECK_THROWS_AS(solve_masked_oet(cost, vec({-1.0}), vec({1.0}), mask), InvalidArgument);
  CHECK_THROWS_AS(solve_masked_oet(cost, vec({1.0, 1.0}), vec({1.0}), mask), InvalidArgument);
  SolverOptions bad;
  bad.eps_decay = 1.5;
  CHECK_THROWS_AS(solve_masked_oet(cost, vec({1.0}), vec({1.0}), mask, bad), InvalidArgument);
  CHECK_THROWS_AS(parse_solver_method("simplex"), InvalidArgument);
  CHECK(parse_solver_method("sinkhorn") == SolverMethod::Sinkhorn);
}

TEST_CASE("non-convergence is signalled with the residual") {
  std::mt19937_64 rng(3);
  auto in = random_instance(rng, 6, 6, 1.0);
  SolverOptions o;
  o.max_iters = 1;
  try {
    solve_masked_oet(dense_cost(in.C, in.mask), in.w0, in.w1, in.mask, o);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 0.0);
  }
  o.method = SolverMethod::Sinkhorn;
  o.final_eps = 1e-2;
  CHECK_THROWS_AS(solve_masked_oet(dense_cost(in.C, in.mask), in.w0, in.w1, in.mask, o), ConvergenceError);
}

TEST_CASE("property: solver matches the projected-gradient oracle on 3x3 instances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    auto in = random_instance(rng, 3, 3, 1.0);
    const auto cost = dense_cost(in.C, in.mask);
    const auto g = solve_masked_oet(cost, in.w0, in.w1, in.mask);
    const double ours = oet_objective(g, cost, in.w0, in.w1);
    const double ref = oracle::projected_gradient_min(in.C, in.w0, in.w1, 50, 1000 + trial);
    CAPTURE(trial);
    CHECK(std::abs(ours - ref) < 1e-4);
    CHECK(ours <= ref + 1e-7);
  }
}

TEST_CASE("property: returned entries respect the mask") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng, 7, 9, 0.35);
    const auto g = solve_masked_oet(dense_cost(in.C, SupportMask::full(7, 9)), in.w0, in.w1, in.mask);
    for (const auto& t : g.entries()) {
      CHECK(in.mask.contains(t.row, t.col));
      CHECK(t.value >= 0.0);
      CHECK(std::isfinite(t.value));
    }
  }
}

TEST_CASE("property: annealing further never raises the objective") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng, 8, 6, 0.7);
    const auto cost = dense_cost(in.C, in.mask);
    double previous = kInf;
    for (double final_eps : {1e-1, 1e-3, 1e-5, 1e-7, 1e-9}) {
      SolverOptions o;
      o.final_eps = final_eps;
      const double obj = oet_objective(solve_masked_oet(cost, in.w0, in.w1, in.mask, o), cost, in.w0, in.w1);
      CHECK(obj <= previous + o.tolerance);
      previous = obj;
    }
  }
}

TEST_CASE("property: scaling both marginals scales the plan") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng, 5, 7, 0.8);
    const auto cost = dense_cost(in.C, in.mask);
    const double lambda = 0.1 + 5.0 * (trial / 10.0);
    const auto g = solve_masked_oet(cost, in.w0, in.w1, in.mask);
    const auto h = solve_masked_oet(cost, lambda * in.w0, lambda * in.w1, in.mask);
    const Eigen::MatrixXd G = to_dense(g), H = to_dense(h);
    CHECK((H - lambda * G).cwiseAbs().maxCoeff() <= 1e-8 * lambda * G.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("sinkhorn and newton agree on the regularized problem") {
  std::mt19937_64 rng(10);
  auto in = random_instance(rng, 12, 10, 0.6);
  const auto cost = dense_cost(in.C, in.mask);
  SolverOptions o;
  o.final_eps = 0.05;
  o.tolerance = 1e-12;
  const auto newton = to_dense(solve_masked_oet(cost, in.w0, in.w1, in.mask, o));
  o.method = SolverMethod::Sinkhorn;
  const auto sink = to_dense(solve_masked_oet(cost, in.w0, in.w1, in.mask, o));
  CHECK((newton - sink).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("thread count does not change the result") {
  std::mt19937_64 rng(12);
  auto in = random_instance(rng, 30, 30, 0.1);
  const auto cost = dense_cost(in.C, in.mask);
  SolverOptions o;
  SolveStats s1, s4;
  const auto a = solve_masked_oet(cost, in.w0, in.w1, in.mask, o, &s1);
  o.threads = 4;
  const auto b = solve_masked_oet(cost, in.w0, in.w1, in.mask, o, &s4);
  REQUIRE(a.nnz() == b.nnz());
  for (std::size_t e = 0; e < a.nnz(); ++e) CHECK(a.entries()[e].value == b.entries()[e].value);
  CHECK(s1.components == s4.components);
  CHECK(s1.components > 1);
  o.method = SolverMethod::Sinkhorn;
  o.final_eps = 1e-2;
  o.threads = 1;
  const auto c = solve_masked_oet(cost, in.w0, in.w1, in.mask, o);
  o.threads = 3;
  const auto d = solve_masked_oet(cost, in.w0, in.w1, in.mask, o);
  for (std::size_t e = 0; e < c.nnz(); ++e) CHECK(c.entries()[e].value == d.entries()[e].value);
}

TEST_CASE("iterative and dense Newton steps reach the same plan") {
  std::mt19937_64 rng(13);
  auto in = random_instance(rng, 15, 12, 0.5);
  const auto cost = dense_cost(in.C, in.mask);
  SolverOptions o;
  o.final_eps = 1e-3;
  const auto dense = to_dense(solve_masked_oet(cost, in.w0, in.w1, in.mask, o));
  o.dense_newton_limit = 0;
  const auto iterative = to_dense(solve_masked_oet(cost, in.w0, in.w1, in.mask, o));
  CHECK((dense - iterative).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("semi-coupling examples") {
  const Vec mu0 = vec({2.0, 3.0}), mu1 = vec({1.0, 4.0});
  SparseCoupling single(2, 2, {{0, 1, 0.3}, {1, 0, 0.7}});
  const auto sc = extract_semi_coupling(single, mu0, mu1);
  CHECK(sc.gamma0.value_at(0, 1) == 2.0);
  CHECK(sc.gamma0.value_at(1, 0) == 3.0);
  CHECK(sc.gamma1.value_at(0, 1) == 4.0);
  CHECK(sc.gamma1.value_at(1, 0) == 1.0);

  SparseCoupling perm(3, 3, {{0, 2, 1.5}, {1, 0, 0.5}, {2, 1, 2.0}});
  const auto p = extract_semi_coupling(perm, vec({1.5, 0.5, 2.0}), vec({0.5, 2.0, 1.5}));
  for (const auto& t : perm.entries()) {
    CHECK(p.gamma0.value_at(t.row, t.col) == t.value);
    CHECK(p.gamma1.value_at(t.row, t.col) == t.value);
  }
  CHECK(p.death_rows.empty());
  CHECK(p.birth_cols.empty());
}

TEST_CASE("semi-coupling flags death rows and birth columns") {
  // Row 1 has no mass, column 2 has no mass, row 2 only reaches column 2.
  SparseCoupling g(3, 3, {{0, 0, 1.0}, {0, 1, 1.0}, {2, 2, 1e-30}});
  const auto sc = extract_semi_coupling(g, vec({1, 1, 1}), vec({1, 1, 1}));
  CHECK(sc.death_rows == std::vector<Index>{1, 2});
  CHECK(sc.birth_cols == std::vector<Index>{2});
  CHECK(sc.gamma0.nnz() == 2);
  CHECK(sc.gamma0.value_at(0, 0) == 0.5);
  CHECK(sc.gamma1.value_at(0, 0) == 1.0);
}

TEST_CASE("property: semi-coupling marginals on random masked instances") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> size(1, 50);
  for (int trial = 0; trial < 25; ++trial) {
    const int K0 = size(rng), K1 = size(rng);
    auto in = random_instance(rng, K0, K1, 0.15);
    const auto g = solve_masked_oet(dense_cost(in.C, in.mask), in.w0, in.w1, in.mask);
    const auto sc = extract_semi_coupling(g, in.w0, in.w1);
    const auto r = sc.gamma0.row_sums();
    const auto s = sc.gamma1.col_sums();
    std::vector<char> dead(K0, 0), born(K1, 0);
    for (auto i : sc.death_rows) dead[i] = 1;
    for (auto j : sc.birth_cols) born[j] = 1;
    for (int i = 0; i < K0; ++i)
      if (!dead[i]) CHECK(std::abs(r[i] - in.w0[i]) <= 1e-10 * in.w0[i]);
    for (int j = 0; j < K1; ++j)
      if (!born[j]) CHECK(std::abs(s[j] - in.w1[j]) <= 1e-10 * in.w1[j]);
    REQUIRE(sc.gamma0.nnz() == sc.gamma1.nnz());
    for (std::size_t e = 0; e < sc.gamma0.nnz(); ++e) {
      CHECK(sc.gamma0.entries()[e].row == sc.gamma1.entries()[e].row);
      CHECK(sc.gamma0.entries()[e].col == sc.gamma1.entries()[e].col);
    }
  }
}
