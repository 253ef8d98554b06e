#pragma once

#include "cstarlab/numeric.hpp"

namespace cstarlab {

struct MatrixGameResult {
  double value = 0.0;
  VecXd row_strategy;     // minimizer over rows
  VecXd column_strategy;  // maximizer over columns
  int pivots = 0;
};

// value = max_w min_k (P w)_k over probability vectors w (columns) and rows k.
// Shifted to a positive payoff and solved as max 1^T u, P'^T u <= 1, u >= 0 by
// a dense tableau simplex with Bland's rule; the column strategy is read from
// the reduced costs of the slacks.
inline MatrixGameResult solve_matrix_game(const Eigen::MatrixXd& P) {
  const Index K = P.rows();
  const Index N = P.cols();
  if (K == 0 || N == 0) throw InputError("matrix game needs a nonempty payoff matrix");
  const double shift = 1.0 - std::min(0.0, P.minCoeff());
  Eigen::MatrixXd Pp = P.array() + shift;
  // tableau rows: N constraints, columns: K structural + N slack + rhs
  Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(N + 1, K + N + 1);
  tab.topLeftCorner(N, K) = Pp.transpose();
  tab.block(0, K, N, N).setIdentity();
  tab.col(K + N).head(N).setOnes();
  tab.row(N).head(K).setConstant(-1.0);  // objective row: reduced costs of max 1^T u
  std::vector<Index> basis(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) basis[static_cast<std::size_t>(i)] = K + i;
  const double eps = 1e-12;
  MatrixGameResult r;
  for (int it = 0; it < 100000; ++it) {
    Index enter = -1;
    for (Index j = 0; j < K + N; ++j)
      if (tab(N, j) < -eps) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    Index leave = -1;
    double best = 0.0;
    for (Index i = 0; i < N; ++i) {
      double a = tab(i, enter);
      if (a <= eps) continue;
      double ratio = tab(i, K + N) / a;
      if (leave < 0 || ratio < best - 1e-15 ||
          (std::abs(ratio - best) <= 1e-15 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
        leave = i;
        best = ratio;
      }
    }
    if (leave < 0) throw NumericalError("matrix game LP is unbounded");
    tab.row(leave) /= tab(leave, enter);
    for (Index i = 0; i <= N; ++i)
      if (i != leave && tab(i, enter) != 0.0) tab.row(i) -= tab(i, enter) * tab.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
    ++r.pivots;
  }
  double obj = tab(N, K + N);
  if (!(obj > 0.0)) throw NumericalError("matrix game LP degenerate");
  VecXd u = VecXd::Zero(K);
  for (Index i = 0; i < N; ++i)
    if (basis[static_cast<std::size_t>(i)] < K) u(basis[static_cast<std::size_t>(i)]) = tab(i, K + N);
  VecXd z = tab.row(N).segment(K, N).transpose().cwiseMax(0.0);
  r.value = 1.0 / obj - shift;
  r.row_strategy = u / u.sum();
  r.column_strategy = z / z.sum();
  return r;
}

// Euclidean projection onto the probability simplex.
inline VecXd project_simplex(const VecXd& v) {
  VecXd s = v;
  std::sort(s.data(), s.data() + s.size(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    cum += s(i);
    double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (s(i) - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

struct SimplexQPResult {
  VecXd x;
  double value = 0.0;
  double lower_bound = 0.0;  // value minus the Frank-Wolfe gap
};

// min x^T Q x - 2 b^T x + c over the probability simplex (Q symmetric PSD).
inline SimplexQPResult minimize_quadratic_on_simplex(const Eigen::MatrixXd& Q, const VecXd& b, double c,
                                                     double scan_step = 1e-3, int iters = 5000) {
  const Index m = Q.rows();
  auto f = [&](const VecXd& x) { return x.dot(Q * x) - 2.0 * b.dot(x) + c; };
  SimplexQPResult r;
  if (m == 1) {
    r.x = VecXd::Ones(1);
  } else if (m == 2) {
    // scan, then the exact minimizer of the 1-D quadratic in s = x_0
    double best_s = 0.0, best = 1e300;
    for (double s = 0.0; s <= 1.0 + 1e-12; s += scan_step) {
      VecXd x(2);
      x << std::min(s, 1.0), 1.0 - std::min(s, 1.0);
      double v = f(x);
      if (v < best) best = v, best_s = x(0);
    }
    double a2 = Q(0, 0) - 2.0 * Q(0, 1) + Q(1, 1);
    double a1 = 2.0 * (Q(0, 1) - Q(1, 1)) - 2.0 * (b(0) - b(1));
    if (a2 > 0.0) {
      double s = std::clamp(-a1 / (2.0 * a2), 0.0, 1.0);
      VecXd x(2);
      x << s, 1.0 - s;
      if (f(x) <= best) best_s = s;
    }
    r.x = VecXd(2);
    r.x << best_s, 1.0 - best_s;
  } else {
    double L = 2.0 * std::max(1e-300, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().maxCoeff());
    VecXd x = VecXd::Constant(m, 1.0 / static_cast<double>(m));
    VecXd y = x;
    double t = 1.0;
    for (int k = 0; k < iters; ++k) {
      VecXd g = 2.0 * (Q * y) - 2.0 * b;
      VecXd xn = project_simplex(y - g / L);
      double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = xn + ((t - 1.0) / tn) * (xn - x);
      if ((xn - x).norm() < 1e-15) {
        x = xn;
        break;
      }
      x = xn;
      t = tn;
    }
    r.x = x;
  }
  r.value = f(r.x);
  VecXd g = 2.0 * (Q * r.x) - 2.0 * b;
  double gap = g.dot(r.x) - g.minCoeff();
  r.lower_bound = r.value - std::max(0.0, gap);
  return r;
}

}  // namespace cstarlab
