#pragma once

#include "cstarlab/numeric.hpp"

#include <numeric>
#include <optional>

namespace cstarlab {

// One fiber of an operator field: a formal action on C^n with a diagonal
// metric, a formal adjoint action, and linear constraints cutting out the
// domain (dom = ker C). Unbounded operators enter through discretizations whose
// boundary form K = M^* H - H Madj is nonzero; bounded matrices have K = 0.
struct FiberOperator {
  SpMat action;
  SpMat formal_adjoint;
  VecXd metric;
  SpMat constraints;  // k x n
  std::string label;

  Index dim() const { return action.rows(); }
};

inline void check_fiber(const FiberOperator& F) {
  const Index n = F.action.rows();
  if (F.action.cols() != n || F.formal_adjoint.rows() != n || F.formal_adjoint.cols() != n)
    throw InputError("fiber operator: action matrices must be square of equal size");
  if (F.metric.size() != n) throw InputError("fiber operator: metric size mismatch");
  if (F.constraints.cols() != n) throw InputError("fiber operator: constraint width mismatch");
  if (n > 0 && F.metric.minCoeff() <= 0.0) throw InputError("fiber operator: metric must be positive");
}

inline SpMat metric_adjoint(const SpMat& A, const VecXd& w) {
  SpMat H = sparse_diag(w);
  SpMat Hi = sparse_diag(VecXd(w.cwiseInverse()));
  return SpMat(Hi * SpMat(A.adjoint()) * H);
}

// Bounded operator given by a matrix; the formal adjoint is the metric adjoint.
inline FiberOperator bounded_fiber(const MatXcd& A, VecXd metric = VecXd(), std::string label = "matrix") {
  if (A.rows() != A.cols()) throw InputError("bounded_fiber: matrix must be square");
  if (metric.size() == 0) metric = VecXd::Ones(A.rows());
  FiberOperator F;
  F.action = to_sparse(A);
  F.metric = metric;
  F.formal_adjoint = metric_adjoint(F.action, metric);
  F.constraints = SpMat(0, A.rows());
  F.label = std::move(label);
  check_fiber(F);
  return F;
}

inline FiberOperator bounded_fiber(const SpMat& A, VecXd metric, std::string label) {
  if (metric.size() == 0) metric = VecXd::Ones(A.rows());
  FiberOperator F;
  F.action = A;
  F.metric = metric;
  F.formal_adjoint = metric_adjoint(A, metric);
  F.constraints = SpMat(0, A.rows());
  F.label = std::move(label);
  check_fiber(F);
  return F;
}

inline SpMat boundary_form(const FiberOperator& F) {
  SpMat H = sparse_diag(F.metric);
  SpMat HA = H * F.formal_adjoint;
  SpMat K = SpMat(F.action.adjoint()) * H - HA;
  // roundoff relative to the operator itself, not to K, decides what vanishes
  double kmax = max_abs(K);
  double thr = 1e-12 * std::max(max_abs(HA), max_abs(SpMat(H * F.action)));
  if (kmax <= thr) return SpMat(F.dim(), F.dim());
  return prune_relative(K, std::max(1e-13, thr / kmax));
}

// H-orthonormal basis of ker C. Columns of C that vanish are free coordinates;
// the remaining block is handled by a dense null-space computation.
inline SpMat kernel_basis(const SpMat& C, const VecXd& w, double rel_tol = 1e-10) {
  const Index n = w.size();
  std::vector<Index> S = C.rows() ? nonzero_columns(prune_relative(C, 1e-14)) : std::vector<Index>{};
  std::vector<char> inS(static_cast<std::size_t>(n), 0);
  for (Index j : S) inS[static_cast<std::size_t>(j)] = 1;
  MatXcd NS;
  if (!S.empty()) {
    std::vector<Index> rows(static_cast<std::size_t>(C.rows()));
    std::iota(rows.begin(), rows.end(), Index{0});
    MatXcd CS = gather(C, rows, S);
    MatXcd N = null_space(CS, rel_tol);
    if (N.cols() > 0) {
      VecXd wS(static_cast<Index>(S.size()));
      for (std::size_t i = 0; i < S.size(); ++i) wS(static_cast<Index>(i)) = w(S[i]);
      MatXcd G = N.adjoint() * wS.asDiagonal() * N;
      Eigen::LLT<MatXcd> llt(hermitian_part(G));
      MatXcd Linv = llt.matrixL().solve(MatXcd::Identity(G.rows(), G.cols()));
      NS = N * Linv.adjoint();
    } else {
      NS = MatXcd(static_cast<Index>(S.size()), 0);
    }
  }
  Index nfree = n - static_cast<Index>(S.size());
  SpMat B(n, nfree + NS.cols());
  std::vector<Eigen::Triplet<cd>> t;
  Index col = 0;
  for (Index j = 0; j < n; ++j)
    if (!inS[static_cast<std::size_t>(j)]) t.emplace_back(j, col++, cd(1.0 / std::sqrt(w(j))));
  for (Index c = 0; c < NS.cols(); ++c, ++col)
    for (std::size_t i = 0; i < S.size(); ++i)
      if (NS(static_cast<Index>(i), c) != cd(0.0)) t.emplace_back(S[i], col, NS(static_cast<Index>(i), c));
  B.setFromTriplets(t.begin(), t.end());
  B.makeCompressed();
  return B;
}

inline SpMat domain_basis(const FiberOperator& F) { return kernel_basis(F.constraints, F.metric); }

inline Index domain_dim(const FiberOperator& F) { return domain_basis(F).cols(); }

// Constraints describing dom(T*) = { g : K g in range(C^*) }.
inline SpMat adjoint_constraints(const FiberOperator& F, double rel_tol = 1e-9) {
  const Index n = F.dim();
  SpMat K = boundary_form(F);
  std::vector<Index> Sc = nonzero_columns(K);
  if (Sc.empty()) return SpMat(0, n);
  SpMat Cs = SpMat(F.constraints.adjoint());
  std::vector<Index> R = nonzero_rows(K);
  for (Index r : nonzero_rows(Cs)) R.push_back(r);
  std::sort(R.begin(), R.end());
  R.erase(std::unique(R.begin(), R.end()), R.end());
  std::vector<Index> allc(static_cast<std::size_t>(Cs.cols()));
  std::iota(allc.begin(), allc.end(), Index{0});
  MatXcd KS = gather(K, R, Sc);
  MatXcd CR = gather(Cs, R, allc);
  MatXcd E(static_cast<Index>(R.size()), KS.cols() + CR.cols());
  E << KS, -CR;
  MatXcd N = null_space(E, rel_tol);
  MatXcd G = range_basis(N.topRows(static_cast<Index>(Sc.size())), 1e-9);
  // rows spanning the orthogonal complement of G inside C^{|Sc|}
  MatXcd Gperp = null_space(G.adjoint(), 1e-12);
  SpMat C(Gperp.cols(), n);
  std::vector<Eigen::Triplet<cd>> t;
  for (Index r = 0; r < Gperp.cols(); ++r)
    for (std::size_t i = 0; i < Sc.size(); ++i) {
      cd v = std::conj(Gperp(static_cast<Index>(i), r));
      if (std::abs(v) > 1e-15) t.emplace_back(r, Sc[i], v);
    }
  C.setFromTriplets(t.begin(), t.end());
  C.makeCompressed();
  return C;
}

// T* as a fiber operator (action Madj on the adjoint domain).
inline FiberOperator adjoint(const FiberOperator& F) {
  FiberOperator A;
  A.action = F.formal_adjoint;
  A.formal_adjoint = F.action;
  A.metric = F.metric;
  A.constraints = adjoint_constraints(F);
  A.label = F.label + "*";
  return A;
}

// max |<Mf,g> - <f,Mg>| over H-unit f, g in the domain, relative to the size of
// the compressed action.
inline double symmetry_residual(const FiberOperator& F) {
  SpMat B = domain_basis(F);
  if (B.cols() == 0) return 0.0;
  SpMat H = sparse_diag(F.metric);
  SpMat Kp = SpMat(F.action.adjoint()) * H - H * F.action;
  SpMat BKB = SpMat(B.adjoint()) * Kp * B;
  SpMat BMB = SpMat(B.adjoint()) * H * F.action * B;
  double scale = std::max(1.0, max_abs(BMB));
  // formal adjoint must agree with the action on the domain
  SpMat diff = (F.action - F.formal_adjoint) * B;
  double act = max_abs(diff) / std::max(1.0, max_abs(SpMat(F.action * B)));
  return std::max(max_abs(BKB) / scale, act);
}

inline bool is_symmetric(const FiberOperator& F, double tol = 1e-8) { return symmetry_residual(F) <= tol; }

struct DefectReport {
  int n_plus = 0;
  int n_minus = 0;
  VecXd sigma_plus;   // smallest singular values of (T* - i) on dom T*
  VecXd sigma_minus;  // smallest singular values of (T* + i)
  double sigma_max = 0.0;
  double threshold = 0.0;
  double tau = 0.0;
  Index dim = 0;

  double sigma_min() const {
    double a = sigma_plus.size() ? sigma_plus(0) : 0.0;
    double b = sigma_minus.size() ? sigma_minus(0) : 0.0;
    return std::min(a, b);
  }
  // Distance of the decision from the threshold: log10 ratio of the nearest
  // singular value to the threshold.
  double margin() const {
    double best = 1e300;
    auto scan = [&](const VecXd& s) {
      for (Index i = 0; i < s.size(); ++i)
        if (s(i) > 0.0) best = std::min(best, std::abs(std::log10(s(i) / threshold)));
    };
    scan(sigma_plus);
    scan(sigma_minus);
    return best;
  }
};

class NotSymmetricError : public HypothesisError {
 public:
  NotSymmetricError(const std::string& what, double r) : HypothesisError(what), residual(r) {}
  double residual;
};

inline DefectReport defect_indices(const FiberOperator& F, double tau = -1.0, double sym_tol = 1e-8) {
  check_fiber(F);
  double r = symmetry_residual(F);
  if (r > sym_tol)
    throw NotSymmetricError("defect_indices: operator '" + F.label + "' is not symmetric (residual " +
                                std::to_string(r) + ")",
                            r);
  const Index n = F.dim();
  DefectReport rep;
  rep.dim = n;
  rep.tau = tau < 0.0 ? default_tau(n) : tau;
  SpMat Bs = kernel_basis(adjoint_constraints(F), F.metric);
  SpMat Wh = sparse_diag(VecXd(F.metric.cwiseSqrt()));
  const int want = 3;
  double smax = 0.0;
  VecXd s[2];
  for (int sgn = 0; sgn < 2; ++sgn) {
    cd shift = sgn == 0 ? I_unit : -I_unit;
    SpMat A = Wh * (F.formal_adjoint - shift * sparse_identity(n)) * Bs;
    A.makeCompressed();
    SingularInfo info = smallest_singular(A, want);
    s[sgn] = info.sigma;
    smax = std::max(smax, info.sigma_max);
  }
  rep.sigma_max = smax;
  rep.threshold = rep.tau * smax;
  rep.sigma_plus = s[0];
  rep.sigma_minus = s[1];
  for (Index i = 0; i < s[0].size(); ++i)
    if (s[0](i) <= rep.threshold) ++rep.n_plus;
  for (Index i = 0; i < s[1].size(); ++i)
    if (s[1](i) <= rep.threshold) ++rep.n_minus;
  return rep;
}

inline SpMat block_diag(const SpMat& A, const SpMat& B) {
  SpMat C(A.rows() + B.rows(), A.cols() + B.cols());
  std::vector<Eigen::Triplet<cd>> t;
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Index k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it) t.emplace_back(A.rows() + it.row(), A.cols() + it.col(), it.value());
  C.setFromTriplets(t.begin(), t.end());
  C.makeCompressed();
  return C;
}

// [[0, A],[B, 0]]
inline SpMat off_diag(const SpMat& A, const SpMat& B) {
  const Index n = B.cols();
  const Index m = A.cols();
  SpMat C(A.rows() + B.rows(), m + n);
  std::vector<Eigen::Triplet<cd>> t;
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) t.emplace_back(it.row(), n + it.col(), it.value());
  for (Index k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it) t.emplace_back(A.rows() + it.row(), it.col(), it.value());
  C.setFromTriplets(t.begin(), t.end());
  C.makeCompressed();
  return C;
}

// The 2x2 block operator [[0, T*],[T, 0]] on dom(T*) + dom(T).
inline FiberOperator hat(const FiberOperator& T, const FiberOperator& Tstar) {
  if (T.dim() != Tstar.dim()) throw InputError("hat: adjoint model has a different size");
  FiberOperator F;
  F.action = off_diag(Tstar.action, T.action);
  F.formal_adjoint = off_diag(T.formal_adjoint, Tstar.formal_adjoint);
  F.metric = VecXd(2 * T.dim());
  F.metric << Tstar.metric, T.metric;
  F.constraints = block_diag(Tstar.constraints, T.constraints);
  F.label = "hat(" + T.label + ")";
  return F;
}

inline SpMat vstack(const SpMat& A, const SpMat& B) {
  SpMat C(A.rows() + B.rows(), A.cols());
  std::vector<Eigen::Triplet<cd>> t;
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Index k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it) t.emplace_back(A.rows() + it.row(), it.col(), it.value());
  C.setFromTriplets(t.begin(), t.end());
  C.makeCompressed();
  return C;
}

// T + V on dom(T) ∩ dom(V).
inline FiberOperator sum(const FiberOperator& T, const FiberOperator& V) {
  if (T.dim() != V.dim()) throw InputError("sum: fiber sizes differ");
  FiberOperator F;
  F.action = T.action + V.action;
  F.formal_adjoint = T.formal_adjoint + V.formal_adjoint;
  F.metric = T.metric;
  F.constraints = vstack(T.constraints, V.constraints);
  F.label = T.label + "+" + V.label;
  return F;
}

inline FiberOperator scaled(const FiberOperator& T, double c) {
  FiberOperator F = T;
  F.action *= cd(c);
  F.formal_adjoint *= cd(c);
  F.label = std::to_string(c) + "*" + T.label;
  return F;
}

inline FiberOperator with_constraints(FiberOperator F, const SpMat& C) {
  F.constraints = C;
  return F;
}

// Compression of a symmetric fiber to its domain: the Hermitian matrix
// B^* H M B in H-orthonormal domain coordinates.
struct HermitianModel {
  MatXcd matrix;
  SpMat basis;
  VecXd metric;
  double hermitian_residual = 0.0;

  MatXcd to_nodal(const MatXcd& A) const {
    MatXcd Bd(basis);
    return Bd * A * Bd.adjoint() * metric.asDiagonal();
  }
  VecXcd coords(const VecXcd& x) const { return SpMat(basis.adjoint()) * (metric.cast<cd>().asDiagonal() * x); }
};

inline HermitianModel compress(const FiberOperator& F, double tol = 1e-8) {
  HermitianModel m;
  m.basis = domain_basis(F);
  m.metric = F.metric;
  SpMat H = sparse_diag(F.metric);
  MatXcd A(SpMat(SpMat(m.basis.adjoint()) * H * F.action * m.basis));
  double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  m.hermitian_residual = (A - A.adjoint()).cwiseAbs().maxCoeff() / scale;
  if (m.hermitian_residual > tol)
    throw NotSymmetricError("compress: operator '" + F.label + "' is not symmetric on its domain",
                            m.hermitian_residual);
  m.matrix = hermitian_part(A);
  return m;
}

inline double metric_norm(const VecXcd& x, const VecXd& w) {
  return std::sqrt((x.cwiseAbs2().cwiseProduct(w)).sum());
}

inline cd metric_inner(const VecXcd& x, const VecXcd& y, const VecXd& w) {
  return (x.conjugate().cwiseProduct(w.cast<cd>()).cwiseProduct(y)).sum();
}

// Graph inner product <x,y> + <Mx,My> in the fiber metric.
inline cd graph_inner(const FiberOperator& F, const VecXcd& x, const VecXcd& y) {
  return metric_inner(x, y, F.metric) + metric_inner(F.action * x, F.action * y, F.metric);
}

inline double constraint_residual(const FiberOperator& F, const VecXcd& x) {
  if (F.constraints.rows() == 0) return 0.0;
  double nx = x.norm();
  if (nx == 0.0) return 0.0;
  double nc = std::max(1e-300, max_abs(F.constraints));
  return (F.constraints * x).norm() / (nc * nx);
}

inline bool in_domain(const FiberOperator& F, const VecXcd& x, double tol = 1e-8) {
  return constraint_residual(F, x) <= tol;
}

// H-orthogonal projection onto the domain.
inline VecXcd project_to_domain(const FiberOperator& F, const VecXcd& x) {
  SpMat B = domain_basis(F);
  VecXcd c = SpMat(B.adjoint()) * (F.metric.cast<cd>().asDiagonal() * x);
  return B * c;
}

inline VecXcd random_domain_vector(const FiberOperator& F, Rng& rng) {
  SpMat B = domain_basis(F);
  return B * random_vector(B.cols(), rng);
}

// Subspace comparison: both directions of inclusion through constraint residuals
// of the other basis, relative to the constraint scale.
inline double domain_distance(const FiberOperator& A, const FiberOperator& B) {
  auto one_way = [](const FiberOperator& X, const FiberOperator& Y) {
    if (Y.constraints.rows() == 0) return 0.0;
    SpMat BX = domain_basis(X);
    MatXcd P(SpMat(Y.constraints * BX));
    MatXcd Yc(Y.constraints);
    Eigen::JacobiSVD<MatXcd> svd(Yc);
    const VecXd& sv = svd.singularValues();
    double scale = 1.0;
    for (Index i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-10 * sv(0)) scale = sv(i);
    scale = std::max(scale, 1e-300);
    // P = C_Y B_X with B_X H-orthonormal; measure against the weakest constraint row
    double ws = std::sqrt(X.metric.maxCoeff());
    return P.size() ? spectral_norm(P) / (scale / ws) : 0.0;
  };
  double d = std::max(one_way(A, B), one_way(B, A));
  Index da = domain_dim(A), db = domain_dim(B);
  if (da != db) d = std::max(d, 1.0);
  return d;
}

inline bool same_domain(const FiberOperator& A, const FiberOperator& B, double tol = 1e-6) {
  return domain_distance(A, B) <= tol;
}

// Same operator: same domain and same action on it.
inline double operator_distance(const FiberOperator& A, const FiberOperator& B) {
  double d = domain_distance(A, B);
  if (d >= 1.0) return d;
  SpMat BA = domain_basis(A);
  SpMat diff = (A.action - B.action) * BA;
  double scale = std::max(1.0, max_abs(SpMat(A.action * BA)));
  return std::max(d, max_abs(diff) / scale);
}

}  // namespace cstarlab
