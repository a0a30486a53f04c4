// Entropic dual of the OET problem, minimized by damped Newton per connected
// block. With reference measure r_ij = sqrt(w0_i w1_j), the plan is
//   gamma_ij = r_ij exp((f_i + g_j - C_ij) / eps)
// and the dual objective is
//   F(f, g) = sum w0 e^{-f} + sum w1 e^{-g} + eps sum gamma.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "wfrflow/oet.hpp"

namespace wfrflow::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Potentials live in extended precision: at eps ~ 1e-9 one double ulp of a
// potential already moves the plan by ~1e-7 relative.
using PotVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
constexpr double kMaxExponent = 700.0;
constexpr int kRankChunk = 256;
// Accepted marginal log-residual when rounding stalls progress at tiny eps.
constexpr double kStagnationResidual = 1e-5;

struct Workspace {
  const OetBlock& B;
  Eigen::VectorXd a0, a1;   // marginal weights
  std::vector<double> lr;   // log reference per entry
  std::vector<Index> row_ptr;
  std::vector<Index> col_ptr, col_perm;

  explicit Workspace(const OetBlock& block, const Vec& w0, const Vec& w1) : B(block) {
    const auto n = static_cast<Index>(B.rows.size());
    const auto m = static_cast<Index>(B.cols.size());
    a0.resize(n);
    a1.resize(m);
    for (Index i = 0; i < n; ++i) a0[i] = w0[B.rows[i]];
    for (Index j = 0; j < m; ++j) a1[j] = w1[B.cols[j]];
    const std::size_t E = B.cost.size();
    lr.resize(E);
    row_ptr.assign(n + 1, 0);
    col_ptr.assign(m + 1, 0);
    for (std::size_t e = 0; e < E; ++e) {
      lr[e] = 0.5 * (std::log(a0[B.entry_row[e]]) + std::log(a1[B.entry_col[e]]));
      ++row_ptr[B.entry_row[e] + 1];
      ++col_ptr[B.entry_col[e] + 1];
    }
    for (Index i = 0; i < n; ++i) row_ptr[i + 1] += row_ptr[i];
    for (Index j = 0; j < m; ++j) col_ptr[j + 1] += col_ptr[j];
    col_perm.resize(E);
    std::vector<Index> fill(col_ptr.begin(), col_ptr.end() - 1);
    for (std::size_t e = 0; e < E; ++e) col_perm[fill[B.entry_col[e]]++] = static_cast<Index>(e);
  }

  Index n() const { return static_cast<Index>(a0.size()); }
  Index m() const { return static_cast<Index>(a1.size()); }
  std::size_t nnz() const { return lr.size(); }

  double exponent(std::size_t e, const PotVec& f, const PotVec& g, long double inv_eps) const {
    return static_cast<double>(lr[e] + (f[B.entry_row[e]] + g[B.entry_col[e]] - B.cost[e]) * inv_eps);
  }

  // +inf once any exponent passes the overflow guard.
  double dual(const PotVec& f, const PotVec& g, double eps) const {
    const long double inv_eps = 1.0L / eps;
    double plan = 0.0;
    for (std::size_t e = 0; e < nnz(); ++e) {
      const double x = exponent(e, f, g, inv_eps);
      if (x > kMaxExponent) return kInf;
      plan += std::exp(x);
    }
    double total = eps * plan;
    for (Index i = 0; i < n(); ++i) total += a0[i] * std::exp(-static_cast<double>(f[i]));
    for (Index j = 0; j < m(); ++j) total += a1[j] * std::exp(-static_cast<double>(g[j]));
    return total;
  }

  // Dual value together with the marginal log-residual at (f, g).
  std::pair<double, double> evaluate(const PotVec& f, const PotVec& g, double eps, Eigen::VectorXd& r,
                                     Eigen::VectorXd& s) const {
    const long double inv_eps = 1.0L / eps;
    r.setZero();
    s.setZero();
    double plan = 0.0;
    for (std::size_t e = 0; e < nnz(); ++e) {
      const double x = exponent(e, f, g, inv_eps);
      if (x > kMaxExponent) return {kInf, kInf};
      const double v = std::exp(x);
      plan += v;
      r[B.entry_row[e]] += v;
      s[B.entry_col[e]] += v;
    }
    double total = eps * plan, residual = 0.0;
    for (Index i = 0; i < n(); ++i) {
      const double b = a0[i] * std::exp(-static_cast<double>(f[i]));
      total += b;
      residual = std::max(residual, std::abs(std::log(r[i] / b)));
    }
    for (Index j = 0; j < m(); ++j) {
      const double b = a1[j] * std::exp(-static_cast<double>(g[j]));
      total += b;
      residual = std::max(residual, std::abs(std::log(s[j] / b)));
    }
    if (std::isnan(residual)) residual = kInf;
    return {total, residual};
  }

  void plan(const PotVec& f, const PotVec& g, double eps, std::vector<double>& gamma) const {
    const long double inv_eps = 1.0L / eps;
    gamma.resize(nnz());
    for (std::size_t e = 0; e < nnz(); ++e) gamma[e] = std::exp(std::min(exponent(e, f, g, inv_eps), kMaxExponent));
  }
};

// Newton direction by eliminating the larger side and factoring the dense
// Schur complement on the smaller one. P is the eliminated side, Q the kept one.
void dense_direction(const Workspace& W, const std::vector<double>& gamma, const Eigen::VectorXd& bf,
                     const Eigen::VectorXd& bg, const Eigen::VectorXd& rf, const Eigen::VectorXd& rg,
                     const Eigen::VectorXd& grad_f, const Eigen::VectorXd& grad_g, double eps,
                     Eigen::VectorXd& df, Eigen::VectorXd& dg) {
  const bool eliminate_rows = W.n() >= W.m();
  const Index p = eliminate_rows ? W.n() : W.m();
  const Index q = eliminate_rows ? W.m() : W.n();
  const Eigen::VectorXd& bP = eliminate_rows ? bf : bg;
  const Eigen::VectorXd& bQ = eliminate_rows ? bg : bf;
  const Eigen::VectorXd& sP = eliminate_rows ? rf : rg;
  const Eigen::VectorXd& sQ = eliminate_rows ? rg : rf;
  const Eigen::VectorXd& gP = eliminate_rows ? grad_f : grad_g;
  const Eigen::VectorXd& gQ = eliminate_rows ? grad_g : grad_f;
  auto p_begin = [&](Index k) { return eliminate_rows ? W.row_ptr[k] : W.col_ptr[k]; };
  auto entry = [&](Index slot) { return eliminate_rows ? slot : W.col_perm[slot]; };
  auto q_of = [&](Index e) { return eliminate_rows ? W.B.entry_col[e] : W.B.entry_row[e]; };

  // denom_p = eps * D_P = eps * b_P + s_P
  Eigen::VectorXd denom = eps * bP + sP;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(q, q);
  S.diagonal() = bQ + sQ / eps;
  Eigen::VectorXd rhs = -gQ;
  Eigen::MatrixXd chunk(q, kRankChunk);
  for (Index start = 0; start < p; start += kRankChunk) {
    const Index width = std::min<Index>(kRankChunk, p - start);
    chunk.leftCols(width).setZero();
    for (Index k = 0; k < width; ++k) {
      const Index pk = start + k;
      const double scale = 1.0 / std::sqrt(eps * denom[pk]);
      for (Index slot = p_begin(pk); slot < p_begin(pk + 1); ++slot) {
        const Index e = entry(slot);
        chunk(q_of(e), k) = gamma[e] * scale;
        rhs[q_of(e)] += gamma[e] * gP[pk] / denom[pk];
      }
    }
    S.selfadjointView<Eigen::Lower>().rankUpdate(chunk.leftCols(width), -1.0);
  }
  Eigen::VectorXd dQ;
  Eigen::LLT<Eigen::MatrixXd> llt(S.selfadjointView<Eigen::Lower>());
  if (llt.info() == Eigen::Success) {
    dQ = llt.solve(rhs);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S.selfadjointView<Eigen::Lower>());
    dQ = ldlt.solve(rhs);
  }
  Eigen::VectorXd dP(p);
  for (Index pk = 0; pk < p; ++pk) {
    double acc = -eps * gP[pk];
    for (Index slot = p_begin(pk); slot < p_begin(pk + 1); ++slot) {
      const Index e = entry(slot);
      acc -= gamma[e] * dQ[q_of(e)];
    }
    dP[pk] = acc / denom[pk];
  }
  if (eliminate_rows) {
    df = std::move(dP);
    dg = std::move(dQ);
  } else {
    df = std::move(dQ);
    dg = std::move(dP);
  }
}

// Truncated Newton: Jacobi-preconditioned CG on the sparse Hessian.
void cg_direction(const Workspace& W, const std::vector<double>& gamma, const Eigen::VectorXd& bf,
                  const Eigen::VectorXd& bg, const Eigen::VectorXd& rf, const Eigen::VectorXd& rg,
                  const Eigen::VectorXd& grad_f, const Eigen::VectorXd& grad_g, double eps, Eigen::VectorXd& df,
                  Eigen::VectorXd& dg) {
  const Index n = W.n(), m = W.m();
  Eigen::VectorXd diag(n + m);
  diag.head(n) = bf + rf / eps;
  diag.tail(m) = bg + rg / eps;
  auto apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    out.head(n) = diag.head(n).cwiseProduct(v.head(n));
    out.tail(m) = diag.tail(m).cwiseProduct(v.tail(m));
    for (std::size_t e = 0; e < W.nnz(); ++e) {
      const Index i = W.B.entry_row[e], j = W.B.entry_col[e];
      const double h = gamma[e] / eps;
      out[i] += h * v[n + j];
      out[n + j] += h * v[i];
    }
  };
  Eigen::VectorXd b(n + m);
  b.head(n) = -grad_f;
  b.tail(m) = -grad_g;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n + m);
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = r.cwiseQuotient(diag);
  Eigen::VectorXd d = z, Ad(n + m);
  double rz = r.dot(z);
  const double bnorm = b.norm();
  const double target = std::min(0.1, std::sqrt(bnorm)) * bnorm;
  for (int it = 0; it < 1000 && r.norm() > target; ++it) {
    apply(d, Ad);
    const double curv = d.dot(Ad);
    if (!(curv > 0.0)) break;
    const double alpha = rz / curv;
    x += alpha * d;
    r -= alpha * Ad;
    z = r.cwiseQuotient(diag);
    const double rz_next = r.dot(z);
    d = z + (rz_next / rz) * d;
    rz = rz_next;
  }
  if (x.isZero()) x = b.cwiseQuotient(diag);
  df = x.head(n);
  dg = x.tail(m);
}

}  // namespace

BlockResult solve_block_newton(const OetBlock& block, const Vec& w0, const Vec& w1, const SolverOptions& o,
                               std::vector<double>& gamma) {
  Workspace W(block, w0, w1);
  const Index n = W.n(), m = W.m();
  const bool dense = std::min(n, m) <= o.dense_newton_limit;
  PotVec f = PotVec::Zero(n), g = PotVec::Zero(m);
  Eigen::VectorXd bf(n), bg(m), rf(n), rg(m), rf_trial(n), rg_trial(m), grad_f(n), grad_g(m), df, dg;
  BlockResult result;

  std::vector<double> schedule;
  for (double e = o.initial_eps; e > o.final_eps * (1.0 + 1e-9); e *= o.eps_decay) schedule.push_back(e);
  schedule.push_back(o.final_eps);

  for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
    const double eps = schedule[stage];
    const bool last = stage + 1 == schedule.size();
    const double tol = last ? o.tolerance : std::max(o.tolerance, 1e-6);
    result.converged = false;
    double F = W.dual(f, g, eps);
    for (int it = 0; it < o.max_iters; ++it) {
      W.plan(f, g, eps, gamma);
      rf.setZero();
      rg.setZero();
      for (std::size_t e = 0; e < W.nnz(); ++e) {
        rf[block.entry_row[e]] += gamma[e];
        rg[block.entry_col[e]] += gamma[e];
      }
      bf = W.a0.cwiseProduct((-f.cast<double>()).array().exp().matrix());
      bg = W.a1.cwiseProduct((-g.cast<double>()).array().exp().matrix());
      grad_f = rf - bf;
      grad_g = rg - bg;
      // Log-ratio of plan marginals to their targets: the update a scaling
      // iteration would make, zero at the optimum.
      double residual = 0.0;
      for (Index i = 0; i < n; ++i) residual = std::max(residual, std::abs(std::log(rf[i] / bf[i])));
      for (Index j = 0; j < m; ++j) residual = std::max(residual, std::abs(std::log(rg[j] / bg[j])));
      if (std::isnan(residual)) residual = kInf;
      result.residual = residual;
      ++result.iterations;
      if (residual < tol) {
        result.converged = true;
        break;
      }
      if (dense)
        dense_direction(W, gamma, bf, bg, rf, rg, grad_f, grad_g, eps, df, dg);
      else
        cg_direction(W, gamma, bf, bg, rf, rg, grad_f, grad_g, eps, df, dg);

      double slope = grad_f.dot(df) + grad_g.dot(dg);
      if (!(slope < 0.0) || !df.allFinite() || !dg.allFinite()) {
        df = -grad_f.cwiseQuotient(bf + rf / eps);
        dg = -grad_g.cwiseQuotient(bg + rg / eps);
        slope = grad_f.dot(df) + grad_g.dot(dg);
      }
      const double full_step = std::max(df.cwiseAbs().maxCoeff(), m > 0 ? dg.cwiseAbs().maxCoeff() : 0.0);
      const long double scale = std::max({1.0L, f.cwiseAbs().maxCoeff(), g.cwiseAbs().maxCoeff()});
      if (full_step <= 2.0L * std::numeric_limits<long double>::epsilon() * scale) {
        // The potentials no longer move at working precision.
        result.converged = residual < kStagnationResidual;
        break;
      }
      // Backtracking on the dual value. Near the optimum at tiny eps the change
      // in F drops below rounding, so a drop in the marginal residual also counts.
      double step = 1.0, F_next = kInf;
      bool accepted = false;
      for (int ls = 0; ls < 60 && !accepted; ++ls) {
        const auto [value, trial_residual] = W.evaluate(f + (step * df).cast<long double>(), g + (step * dg).cast<long double>(), eps, rf_trial, rg_trial);
        F_next = value;
        accepted = F_next <= F + 1e-4 * step * slope || (std::isfinite(F_next) && trial_residual < 0.9 * residual);
        if (!accepted) step *= 0.5;
      }
      if (!accepted) {
        result.converged = residual < kStagnationResidual;
        break;
      }
      f += (step * df).cast<long double>();
      g += (step * dg).cast<long double>();
      F = F_next;
    }
  }
  W.plan(f, g, schedule.back(), gamma);
  return result;
}

}  // namespace wfrflow::detail
