#include "wfrflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "wfrflow/error.hpp"

namespace wfrflow {

namespace {

// Nodes: sources 0..n-1, sinks n..n+m-1, root n+m. Arc k < n*m is source
// k / m -> sink k % m; arc n*m + i is source i -> root; arc n*m + n + j is
// root -> sink j. Every arc is uncapacitated, so non-tree arcs carry no flow.
class NetworkSimplex {
public:
  NetworkSimplex(const Vec& a, const Vec& b, const Eigen::MatrixXd& cost)
      : n_(a.size()), m_(b.size()), root_(n_ + m_), cost_(cost) {
    const Eigen::Index V = n_ + m_ + 1;
    big_ = (cost.maxCoeff() + 1.0) * static_cast<double>(V);
    tol_ = 1e-11 * (cost.maxCoeff() + 1.0) * static_cast<double>(V);
    parent_.assign(V, -1);
    pred_.assign(V, -1);
    flow_.assign(V, 0.0);
    pot_.assign(V, 0.0);
    depth_.assign(V, 0);
    children_.assign(V, {});
    for (Eigen::Index i = 0; i < n_; ++i) attach(i, root_, n_ * m_ + i, a[i], -big_);
    for (Eigen::Index j = 0; j < m_; ++j) attach(n_ + j, root_, n_ * m_ + n_ + j, b[j], big_);
  }

  long long run() {
    const Eigen::Index arcs = n_ * m_;
    const Eigen::Index block = std::max<Eigen::Index>(64, static_cast<Eigen::Index>(std::sqrt(double(arcs))));
    Eigen::Index next = 0;
    long long pivots = 0;
    const long long limit = 1000LL * (n_ + m_) + 100000;
    while (true) {
      Eigen::Index best = -1, scanned = 0;
      double best_rc = -tol_;
      while (scanned < arcs) {
        const Eigen::Index stop = std::min(arcs, scanned + block);
        for (; scanned < stop; ++scanned) {
          const Eigen::Index k = next;
          next = next + 1 == arcs ? 0 : next + 1;
          const Eigen::Index i = k / m_, j = k % m_;
          const double rc = cost_(i, j) + pot_[i] - pot_[n_ + j];
          if (rc < best_rc) {
            best_rc = rc;
            best = k;
          }
        }
        if (best >= 0) break;
      }
      if (best < 0) return pivots;
      pivot(best);
      if (++pivots > limit) throw ConvergenceError("network simplex exceeded its pivot limit", best_rc);
    }
  }

  Eigen::MatrixXd plan() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_, m_);
    for (Eigen::Index v = 0; v < root_; ++v) {
      const Eigen::Index k = pred_[v];
      if (k < n_ * m_) p(k / m_, k % m_) += flow_[v];
    }
    return p;
  }

private:
  Eigen::Index tail(Eigen::Index k) const {
    if (k < n_ * m_) return k / m_;
    if (k < n_ * m_ + n_) return k - n_ * m_;
    return root_;
  }

  double arc_cost(Eigen::Index k) const {
    if (k < n_ * m_) return cost_(k / m_, k % m_);
    return big_;
  }

  void attach(Eigen::Index v, Eigen::Index p, Eigen::Index arc, double flow, double pot) {
    parent_[v] = p;
    pred_[v] = arc;
    flow_[v] = flow;
    pot_[v] = pot;
    depth_[v] = depth_[p] + 1;
    children_[p].push_back(v);
  }

  void unlink(Eigen::Index v) {
    auto& c = children_[parent_[v]];
    const auto it = std::find(c.begin(), c.end(), v);
    *it = c.back();
    c.pop_back();
  }

  // Tree arc pred_[w] along the cycle: +1 when the cycle traverses it head-first.
  bool points_up(Eigen::Index w) const { return tail(pred_[w]) == w; }

  void pivot(Eigen::Index entering) {
    const Eigen::Index u = entering / m_, v = n_ + entering % m_;
    // Cycle orientation: u -> v, then v up to the apex, then apex down to u.
    std::vector<Eigen::Index> up_v, up_u;
    Eigen::Index x = v, y = u;
    while (x != y) {
      if (depth_[x] >= depth_[y]) {
        up_v.push_back(x);
        x = parent_[x];
      } else {
        up_u.push_back(y);
        y = parent_[y];
      }
    }
    // Traverse from the apex: down to u (reverse of up_u), entering arc, then v
    // upward (up_v in order reversed so the apex side comes last). Pick the
    // last blocking arc in that order.
    double theta = INFINITY;
    Eigen::Index leave = -1;
    for (auto it = up_u.rbegin(); it != up_u.rend(); ++it) {
      const Eigen::Index w = *it;
      // Downward traversal parent -> w: against the arc when it points up.
      if (points_up(w) && flow_[w] <= theta) {
        theta = flow_[w];
        leave = w;
      }
    }
    for (Eigen::Index w : up_v) {
      // Upward traversal w -> parent: against the arc when it points down.
      if (!points_up(w) && flow_[w] <= theta) {
        theta = flow_[w];
        leave = w;
      }
    }
    if (leave < 0) throw ConvergenceError("transport problem is unbounded", 0.0);
    for (Eigen::Index w : up_u) flow_[w] += points_up(w) ? -theta : theta;
    for (Eigen::Index w : up_v) flow_[w] += points_up(w) ? theta : -theta;

    // The leaving arc splits off the subtree under `leave`; whichever end of
    // the entering arc lies inside it becomes that subtree's new root.
    const bool in_u_side = std::find(up_u.begin(), up_u.end(), leave) != up_u.end();
    const Eigen::Index inner = in_u_side ? u : v;
    const Eigen::Index outer = in_u_side ? v : u;

    Eigen::Index w = inner, carried_arc = entering, new_parent = outer;
    double carried_flow = theta;
    while (true) {
      const Eigen::Index old_parent = parent_[w];
      const Eigen::Index old_arc = pred_[w];
      const double old_flow = flow_[w];
      unlink(w);
      parent_[w] = new_parent;
      pred_[w] = carried_arc;
      flow_[w] = carried_flow;
      children_[new_parent].push_back(w);
      if (w == leave) break;
      new_parent = w;
      carried_arc = old_arc;
      carried_flow = old_flow;
      w = old_parent;
    }
    refresh(inner);
  }

  void refresh(Eigen::Index top) {
    std::vector<Eigen::Index> stack{top};
    while (!stack.empty()) {
      const Eigen::Index w = stack.back();
      stack.pop_back();
      const Eigen::Index p = parent_[w];
      const double c = arc_cost(pred_[w]);
      pot_[w] = points_up(w) ? pot_[p] - c : pot_[p] + c;
      depth_[w] = depth_[p] + 1;
      for (Eigen::Index ch : children_[w]) stack.push_back(ch);
    }
  }

  Eigen::Index n_, m_, root_;
  const Eigen::MatrixXd& cost_;
  double big_ = 0.0, tol_ = 0.0;
  std::vector<Eigen::Index> parent_, pred_, depth_;
  std::vector<double> flow_, pot_;
  std::vector<std::vector<Eigen::Index>> children_;
};

}  // namespace

ExactTransport exact_transport(const Vec& a, const Vec& b, const Eigen::MatrixXd& cost) {
  const Eigen::Index n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw InvalidArgument("exact transport needs non-empty marginals");
  if (cost.rows() != n || cost.cols() != m) throw InvalidArgument("cost shape does not match the marginals");
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any() || !a.allFinite() || !b.allFinite())
    throw InvalidArgument("transport marginals must be non-negative and finite");
  if (!cost.allFinite() || (cost.array() < 0.0).any()) throw InvalidArgument("transport costs must be finite and >= 0");
  const double total = a.sum();
  if (!(total > 0.0) || std::abs(total - b.sum()) > 1e-9 * total)
    throw InvalidArgument("transport marginals must have equal positive totals");

  // Zero-mass points would start as degenerate tree arcs pointing at the root.
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < n; ++i)
    if (a[i] > 0.0) rows.push_back(i);
  for (Eigen::Index j = 0; j < m; ++j)
    if (b[j] > 0.0) cols.push_back(j);
  const auto rn = static_cast<Eigen::Index>(rows.size()), cn = static_cast<Eigen::Index>(cols.size());
  Vec ra(rn), cb(cn);
  Eigen::MatrixXd rc(rn, cn);
  for (Eigen::Index i = 0; i < rn; ++i) ra[i] = a[rows[i]];
  for (Eigen::Index j = 0; j < cn; ++j) cb[j] = b[cols[j]] * (total / b.sum());
  for (Eigen::Index i = 0; i < rn; ++i)
    for (Eigen::Index j = 0; j < cn; ++j) rc(i, j) = cost(rows[i], cols[j]);

  NetworkSimplex simplex(ra, cb, rc);
  ExactTransport out;
  out.pivots = simplex.run();
  const Eigen::MatrixXd reduced = simplex.plan();
  out.plan = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index i = 0; i < rn; ++i)
    for (Eigen::Index j = 0; j < cn; ++j) out.plan(rows[i], cols[j]) = reduced(i, j);
  out.cost = (out.plan.array() * cost.array()).sum();
  return out;
}

Eigen::MatrixXd euclidean_costs(const PointMatrix& x, const PointMatrix& y) {
  if (x.cols() != y.cols()) throw InvalidArgument("point sets have different dimensions");
  Eigen::MatrixXd c(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).norm();
  return c;
}

}  // namespace wfrflow
