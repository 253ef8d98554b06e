#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseQR>
#include <Eigen/OrderingMethods>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cstarlab {

using cd = std::complex<double>;
using VecXcd = Eigen::VectorXcd;
using MatXcd = Eigen::MatrixXcd;
using VecXd = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<cd>;
using Index = Eigen::Index;

inline constexpr cd I_unit{0.0, 1.0};

// Bad input: malformed specs, shape mismatches, out-of-range parameters.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A mathematical hypothesis of an operation does not hold for the given data.
class HypothesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tolerances {
  double algebra = 1e-10;
  double density = 1e-6;
  double tau = -1.0;  // <0: use 1e-8 * n
};

inline double default_tau(Index n) { return 1e-8 * static_cast<double>(n); }

using Rng = std::mt19937_64;

inline cd random_normal_cd(Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  double re = nd(rng);
  double im = nd(rng);
  return {re, im};
}

inline VecXcd random_vector(Index n, Rng& rng) {
  VecXcd v(n);
  for (Index i = 0; i < n; ++i) v(i) = random_normal_cd(rng);
  return v;
}

inline double random_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

inline SpMat sparse_diag(const VecXcd& d) {
  SpMat D(d.size(), d.size());
  D.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Index i = 0; i < d.size(); ++i) D.insert(i, i) = d(i);
  D.makeCompressed();
  return D;
}

inline SpMat sparse_diag(const VecXd& d) { return sparse_diag(VecXcd(d.cast<cd>())); }

inline SpMat sparse_identity(Index n) { return sparse_diag(VecXd(VecXd::Ones(n))); }

inline SpMat to_sparse(const MatXcd& A, double drop = 0.0) {
  SpMat S(A.rows(), A.cols());
  std::vector<Eigen::Triplet<cd>> t;
  for (Index j = 0; j < A.cols(); ++j)
    for (Index i = 0; i < A.rows(); ++i)
      if (std::abs(A(i, j)) > drop) t.emplace_back(i, j, A(i, j));
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

inline double max_abs(const SpMat& A) {
  double m = 0.0;
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

inline SpMat prune_relative(const SpMat& A, double rel) {
  double cut = rel * max_abs(A);
  SpMat B = A;
  B.prune([cut](Index, Index, const cd& v) { return std::abs(v) > cut; });
  B.makeCompressed();
  return B;
}

inline std::vector<Index> nonzero_columns(const SpMat& A) {
  std::vector<char> hit(static_cast<std::size_t>(A.cols()), 0);
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      if (it.value() != cd(0.0)) hit[static_cast<std::size_t>(it.col())] = 1;
  std::vector<Index> out;
  for (Index j = 0; j < A.cols(); ++j)
    if (hit[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

inline std::vector<Index> nonzero_rows(const SpMat& A) {
  std::vector<char> hit(static_cast<std::size_t>(A.rows()), 0);
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      if (it.value() != cd(0.0)) hit[static_cast<std::size_t>(it.row())] = 1;
  std::vector<Index> out;
  for (Index i = 0; i < A.rows(); ++i)
    if (hit[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

inline MatXcd gather(const SpMat& A, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  std::vector<Index> rpos(static_cast<std::size_t>(A.rows()), -1), cpos(static_cast<std::size_t>(A.cols()), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) rpos[static_cast<std::size_t>(rows[i])] = static_cast<Index>(i);
  for (std::size_t j = 0; j < cols.size(); ++j) cpos[static_cast<std::size_t>(cols[j])] = static_cast<Index>(j);
  MatXcd out = MatXcd::Zero(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) {
      Index r = rpos[static_cast<std::size_t>(it.row())];
      Index c = cpos[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) out(r, c) = it.value();
    }
  return out;
}

// Orthonormal basis of the null space of a dense matrix; singular values below
// rel_tol * sigma_max count as zero.
inline MatXcd null_space(const MatXcd& A, double rel_tol = 1e-10) {
  const Index n = A.cols();
  if (n == 0) return MatXcd(0, 0);
  if (A.rows() == 0) return MatXcd::Identity(n, n);
  Eigen::JacobiSVD<MatXcd> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  double smax = s.size() ? s(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * smax && s(i) > 0.0) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

// Orthonormal basis of the column range.
inline MatXcd range_basis(const MatXcd& A, double rel_tol = 1e-10) {
  if (A.cols() == 0 || A.rows() == 0) return MatXcd(A.rows(), 0);
  Eigen::JacobiSVD<MatXcd> svd(A, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  double smax = s.size() ? s(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * smax && s(i) > 0.0) ++rank;
  return svd.matrixU().leftCols(rank);
}

inline MatXcd hermitian_part(const MatXcd& A) { return 0.5 * (A + A.adjoint()); }

struct SingularInfo {
  VecXd sigma;      // ascending
  MatXcd vectors;   // right singular vectors, columns match sigma
  double sigma_max = 0.0;
};

inline double largest_singular_value(const SpMat& A, int iterations = 80) {
  if (A.cols() == 0 || A.rows() == 0) return 0.0;
  if (A.cols() <= 64) {
    Eigen::JacobiSVD<MatXcd> svd{MatXcd(A)};
    return svd.singularValues()(0);
  }
  Rng rng(0x5eedULL);
  VecXcd v = random_vector(A.cols(), rng).normalized();
  double est = 0.0;
  for (int it = 0; it < iterations; ++it) {
    VecXcd w = A.adjoint() * (A * v);
    double nw = w.norm();
    if (nw == 0.0) return 0.0;
    double next = std::sqrt(nw);
    v = w / nw;
    if (std::abs(next - est) <= 1e-6 * next) {
      est = next;
      break;
    }
    est = next;
  }
  return est;
}

// The k smallest singular values (and right vectors) of a tall or square sparse
// matrix. Small problems use a dense SVD; large ones run block inverse iteration
// on the triangular factor of a sparse QR.
inline SingularInfo smallest_singular(const SpMat& A, int k, Index dense_limit = 64) {
  const Index m = A.cols();
  if (A.rows() < m) throw NumericalError("smallest_singular: matrix must have rows >= cols");
  SingularInfo out;
  if (m == 0) {
    out.sigma = VecXd(0);
    out.vectors = MatXcd(0, 0);
    return out;
  }
  k = static_cast<int>(std::min<Index>(k, m));
  if (m <= dense_limit) {
    MatXcd D(A);
    Eigen::BDCSVD<MatXcd> svd(D, Eigen::ComputeThinV);
    const VecXd& s = svd.singularValues();
    out.sigma_max = s(0);
    out.sigma.resize(k);
    out.vectors.resize(m, k);
    for (int i = 0; i < k; ++i) {
      out.sigma(i) = s(m - 1 - i);
      out.vectors.col(i) = svd.matrixV().col(m - 1 - i);
    }
    return out;
  }

  SpMat Ac = A;
  Ac.makeCompressed();
  Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr;
  qr.setPivotThreshold(0.0);
  qr.compute(Ac);
  if (qr.info() != Eigen::Success) throw NumericalError("sparse QR failed");
  SpMat R = SpMat(qr.matrixR()).topLeftCorner(m, m);
  R.makeCompressed();
  double rmax = max_abs(R);
  for (Index i = 0; i < m; ++i) {
    cd d = R.coeff(i, i);
    if (std::abs(d) < 1e-15 * rmax) R.coeffRef(i, i) = cd(1e-15 * rmax);
  }
  const int block = std::min<int>(k + 2, static_cast<int>(m));
  Rng rng(0xC0FFEEULL);
  MatXcd V(m, block);
  for (int j = 0; j < block; ++j) V.col(j) = random_vector(m, rng);
  VecXd prev = VecXd::Constant(block, -1.0);
  VecXd ritz(block);
  for (int it = 0; it < 60; ++it) {
    MatXcd Y = R.adjoint().triangularView<Eigen::Lower>().solve(V);
    MatXcd Z = R.triangularView<Eigen::Upper>().solve(Y);
    Eigen::HouseholderQR<MatXcd> hq(Z);
    V = hq.householderQ() * MatXcd::Identity(m, block);
    MatXcd W = R * V;
    Eigen::JacobiSVD<MatXcd> small(W, Eigen::ComputeThinV);
    VecXd s = small.singularValues();
    MatXcd Vs = small.matrixV();
    // ascending order
    for (int j = 0; j < block; ++j) ritz(j) = s(block - 1 - j);
    MatXcd Vr(Vs.rows(), block);
    for (int j = 0; j < block; ++j) Vr.col(j) = Vs.col(block - 1 - j);
    V = V * Vr;
    bool done = true;
    for (int j = 0; j < k; ++j)
      if (std::abs(ritz(j) - prev(j)) > 1e-12 * std::max(ritz(j), 1e-300) + 1e-300) done = false;
    prev = ritz;
    if (done && it > 1) break;
  }
  out.sigma = ritz.head(k);
  MatXcd Vp = qr.colsPermutation() * V.leftCols(k);
  out.vectors = Vp;
  out.sigma_max = largest_singular_value(Ac);
  return out;
}

// Eigen-decomposition of a Hermitian matrix (ascending eigenvalues).
struct HermitianEig {
  VecXd values;
  MatXcd vectors;
};

inline HermitianEig hermitian_eig(const MatXcd& A) {
  Eigen::SelfAdjointEigenSolver<MatXcd> es(hermitian_part(A));
  if (es.info() != Eigen::Success) throw NumericalError("Hermitian eigensolve failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline double spectral_norm(const MatXcd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::BDCSVD<MatXcd> svd(A);
  return svd.singularValues()(0);
}

inline double min_singular(const MatXcd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatXcd> svd(A);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

}  // namespace cstarlab
