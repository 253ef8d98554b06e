#pragma once

#include "cstarlab/hilbert_module.hpp"
#include "cstarlab/lambda_spec.hpp"

#include <numbers>

namespace cstarlab {

// ---------------------------------------------------------------------------
// D = -i d/dx on a uniform grid of [0,1]

inline SpMat derivative_matrix(Index n, const std::string& scheme = "central") {
  if (scheme != "central") throw InputError("unsupported difference scheme '" + scheme + "'");
  if (n < 16) throw InputError("the interval grid needs at least 16 nodes");
  const double h = 1.0 / static_cast<double>(n - 1);
  std::vector<Eigen::Triplet<cd>> t;
  for (Index i = 1; i < n - 1; ++i) {
    t.emplace_back(i, i + 1, cd(0.5 / h));
    t.emplace_back(i, i - 1, cd(-0.5 / h));
  }
  t.emplace_back(0, 0, cd(-1.0 / h));
  t.emplace_back(0, 1, cd(1.0 / h));
  t.emplace_back(n - 1, n - 1, cd(1.0 / h));
  t.emplace_back(n - 1, n - 2, cd(-1.0 / h));
  SpMat D(n, n);
  D.setFromTriplets(t.begin(), t.end());
  D.makeCompressed();
  return D;
}

inline VecXd trapezoid_weights(Index n) {
  const double h = 1.0 / static_cast<double>(n - 1);
  VecXd w = VecXd::Constant(n, h);
  w(0) = w(n - 1) = 0.5 * h;
  return w;
}

inline VecXd unit_grid(Index n) {
  VecXd t(n);
  for (Index i = 0; i < n; ++i) t(i) = static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

inline FiberOperator dmax_fiber(Index n, const std::string& scheme = "central") {
  SpMat M = SpMat(derivative_matrix(n, scheme) * cd(0.0, -1.0));
  return {M, M, trapezoid_weights(n), SpMat(0, n), "D_max"};
}

inline SpMat endpoint_constraints(Index n) {
  SpMat C(2, n);
  C.insert(0, 0) = 1.0;
  C.insert(1, n - 1) = 1.0;
  C.makeCompressed();
  return C;
}

inline FiberOperator dmin_fiber(Index n, const std::string& scheme = "central") {
  FiberOperator F = dmax_fiber(n, scheme);
  F.constraints = endpoint_constraints(n);
  F.label = "D_min";
  return F;
}

struct DiracPair {
  OperatorRep dmin;
  OperatorRep dmax;
  Index n = 0;
  std::string scheme;
};

inline DiracPair build_dirac_interval(Index n, const std::string& scheme = "central",
                                      const BaseSpace& base = BaseSpace::single_point()) {
  FiberOperator mn = dmin_fiber(n, scheme);
  FiberOperator mx = dmax_fiber(n, scheme);
  if (!is_symmetric(mn)) throw NumericalError("discretized D_min is not symmetric");
  auto a = std::make_shared<FiberOperator>(mn);
  auto b = std::make_shared<FiberOperator>(mx);
  DiracPair P;
  P.n = n;
  P.scheme = scheme;
  P.dmin = make_field(
      base, n, [a](Index) { return *a; }, [b](Index) { return *b; }, "D_min", OpKind::DifferentialPair);
  P.dmax = make_field(
      base, n, [b](Index) { return *b; }, [a](Index) { return *a; }, "D_max", OpKind::DifferentialPair);
  return P;
}

// ---------------------------------------------------------------------------
// Deficiency data

inline cd zeta_exact(cd lambda) {
  const double e = std::numbers::e;
  return (lambda + e) / (lambda * e + 1.0);
}

inline void require_unimodular(cd lambda) {
  if (!std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()) || std::abs(std::abs(lambda) - 1.0) > 1e-12)
    throw InputError("extension parameter must be unimodular");
}

struct DeficiencyData {
  Index n = 0;
  std::string scheme;
  VecXd t;
  VecXd weights;
  SpMat action;
  SpMat boundary;  // K = M^* H - H M
  VecXcd phi_plus, phi_minus;
  double sigma_plus = 0.0, sigma_minus = 0.0;  // smallest singular values of D_max -/+ i
  double gap_plus = 0.0, gap_minus = 0.0;      // next singular value
  double threshold = 0.0;
  SpMat alpha_plus_row, alpha_minus_row;  // 1 x n

  cd alpha_plus(const VecXcd& xi) const { return (alpha_plus_row * xi)(0); }
  cd alpha_minus(const VecXcd& xi) const { return (alpha_minus_row * xi)(0); }

  // <phi_pm, xi> in the graph inner product
  cd alpha_plus_graph(const VecXcd& xi) const { return graph_inner(dmax(), phi_plus, xi); }
  cd alpha_minus_graph(const VecXcd& xi) const { return graph_inner(dmax(), phi_minus, xi); }

  FiberOperator dmax() const { return {action, action, weights, SpMat(0, n), "D_max"}; }
  FiberOperator dmin() const {
    FiberOperator F = dmax();
    F.constraints = endpoint_constraints(n);
    F.label = "D_min";
    return F;
  }

  VecXcd eta(cd lambda) const { return (lambda * phi_plus + phi_minus) / std::sqrt(2.0); }
  VecXcd eta_perp(cd lambda) const { return (phi_plus - std::conj(lambda) * phi_minus) / std::sqrt(2.0); }

  SpMat extension_row(cd lambda) const {
    SpMat r = alpha_plus_row - lambda * alpha_minus_row;
    return prune_relative(r, 1e-14);
  }

  // f(1) = zeta f(0) on dom(D_lambda)
  cd zeta(cd lambda) const {
    SpMat r = extension_row(lambda);
    cd c0 = r.coeff(0, 0);
    cd c1 = r.coeff(0, n - 1);
    return -c0 / c1;
  }

  FiberOperator extension(cd lambda) const {
    require_unimodular(lambda);
    FiberOperator F = dmax();
    F.constraints = extension_row(lambda);
    F.label = "D_lambda";
    return F;
  }
};

// Kernels of D_max -/+ i from the smallest singular vectors, graph-normalized.
// The functionals alpha_pm are taken in boundary form, i phi^* K xi and
// -i phi^* K xi, which coincide with the graph inner products against exact
// deficiency vectors and vanish identically on dom(D_min).
inline DeficiencyData deficiency_data(Index n, const std::string& scheme = "central", double tau = -1.0) {
  DeficiencyData d;
  d.n = n;
  d.scheme = scheme;
  d.t = unit_grid(n);
  d.weights = trapezoid_weights(n);
  d.action = SpMat(derivative_matrix(n, scheme) * cd(0.0, -1.0));
  FiberOperator F = d.dmax();
  d.boundary = boundary_form(F);
  if (tau < 0.0) tau = default_tau(n);
  SpMat Wh = sparse_diag(VecXd(d.weights.cwiseSqrt()));
  SpMat Id = sparse_identity(n);
  for (int sgn = 0; sgn < 2; ++sgn) {
    cd shift = sgn == 0 ? I_unit : -I_unit;
    SpMat A = Wh * (d.action - shift * Id);
    A.makeCompressed();
    SingularInfo info = smallest_singular(A, 2);
    double thr = tau * info.sigma_max;
    d.threshold = thr;
    int kdim = 0;
    for (Index i = 0; i < info.sigma.size(); ++i)
      if (info.sigma(i) <= thr) ++kdim;
    if (kdim != 1)
      throw NumericalError("deficiency kernel of dimension " + std::to_string(kdim) + " at threshold " +
                           std::to_string(thr) + "; refine the grid or adjust tau");
    VecXcd phi = info.vectors.col(0);
    Index anchor = sgn == 0 ? 0 : n - 1;
    phi *= std::abs(phi(anchor)) / phi(anchor);
    double gn = std::sqrt(std::real(graph_inner(F, phi, phi)));
    phi /= gn;
    if (sgn == 0) {
      d.phi_plus = phi;
      d.sigma_plus = info.sigma(0);
      d.gap_plus = info.sigma(1);
    } else {
      d.phi_minus = phi;
      d.sigma_minus = info.sigma(0);
      d.gap_minus = info.sigma(1);
    }
  }
  const SpMat& K = d.boundary;
  d.alpha_plus_row = prune_relative(SpMat(cd(0.0, 1.0) * SpMat(to_sparse(MatXcd(d.phi_plus.adjoint())) * K)), 1e-14);
  d.alpha_minus_row = prune_relative(SpMat(cd(0.0, -1.0) * SpMat(to_sparse(MatXcd(d.phi_minus.adjoint())) * K)), 1e-14);
  return d;
}

using DeficiencyRef = std::shared_ptr<const DeficiencyData>;

inline DeficiencyRef shared_deficiency_data(Index n, const std::string& scheme = "central") {
  return std::make_shared<const DeficiencyData>(deficiency_data(n, scheme));
}

// Graph-normalized solutions of -i phi' = +-i phi; both have L2 norm 1/sqrt 2.
inline VecXcd analytic_phi_plus(const VecXd& t) {
  const double c = 1.0 / std::sqrt(1.0 - std::exp(-2.0));
  VecXcd v(t.size());
  for (Index i = 0; i < t.size(); ++i) v(i) = c * std::exp(-t(i));
  return v;
}

inline VecXcd analytic_phi_minus(const VecXd& t) {
  const double c = 1.0 / std::sqrt(std::exp(2.0) - 1.0);
  VecXcd v(t.size());
  for (Index i = 0; i < t.size(); ++i) v(i) = c * std::exp(t(i));
  return v;
}

inline OperatorRep build_extension(const DeficiencyRef& data, cd lambda,
                                   const BaseSpace& base = BaseSpace::single_point()) {
  require_unimodular(lambda);
  FiberOperator F = data->extension(lambda);
  return constant_field(base, std::move(F), OpKind::Extension, "D_lambda");
}

// Eigenvalues of D_lambda: f = e^{i kappa t} with e^{i kappa} = zeta.
inline std::vector<double> extension_spectrum(cd zeta, int kmax) {
  double th = std::arg(zeta);
  std::vector<double> ev;
  for (int k = -kmax; k <= kmax; ++k) ev.push_back(th + 2.0 * std::numbers::pi * k);
  std::sort(ev.begin(), ev.end());
  return ev;
}

// D_lambda in its eigenbasis, truncated to |k| <= kmax.
inline MatXcd fourier_extension_model(cd lambda, int kmax) {
  require_unimodular(lambda);
  std::vector<double> ev = extension_spectrum(zeta_exact(lambda), kmax);
  MatXcd A = MatXcd::Zero(static_cast<Index>(ev.size()), static_cast<Index>(ev.size()));
  for (std::size_t i = 0; i < ev.size(); ++i) A(static_cast<Index>(i), static_cast<Index>(i)) = ev[i];
  return A;
}

inline FiberOperator fiber_for_case(const DeficiencyData& d, const FiberCase& c) {
  switch (c.op) {
    case FiberCase::Op::Dmin: return d.dmin();
    case FiberCase::Op::Dmax: return d.dmax();
    case FiberCase::Op::Dlambda: return d.extension(c.lambda);
  }
  return d.dmax();
}

struct BoundaryFieldOps {
  OperatorRep T;
  OperatorRep Tmin;
  OperatorRep Tmax;
  LambdaClassification classification;
  DeficiencyRef data;
};

// T_Lambda over the grid of L: fibers D_{Lambda(p)} on reg(Lambda),
// D_min on ssupp(Lambda). Adjoint fibers follow the boundary-case table.
inline BoundaryFieldOps build_boundary_field(const LambdaSpec& L, Index fiber_n = 201,
                                             const std::string& scheme = "central") {
  BoundaryFieldOps out;
  out.data = shared_deficiency_data(fiber_n, scheme);
  out.classification = classify_lambda(L);
  for (const auto& c : L.cuts()) require_unimodular(c.value);
  auto cls = std::make_shared<LambdaClassification>(out.classification);
  DeficiencyRef d = out.data;
  const BaseSpace& s = L.space();
  out.T = make_field(
      s, fiber_n, [d, cls](Index p) { return fiber_for_case(*d, tlambda_fiber_case(*cls, p)); },
      [d, cls](Index p) { return fiber_for_case(*d, tlambda_adjoint_fiber_case(*cls, p)); }, "T_Lambda",
      OpKind::BoundaryField);
  out.Tmin = make_field(
      s, fiber_n, [d](Index) { return d->dmin(); }, [d](Index) { return d->dmax(); }, "T_min", OpKind::DifferentialPair);
  out.Tmax = make_field(
      s, fiber_n, [d](Index) { return d->dmax(); }, [d](Index) { return d->dmin(); }, "T_max", OpKind::DifferentialPair);
  return out;
}

// ---------------------------------------------------------------------------
// Functional calculus on compressed selfadjoint models

struct FunctionSymbol {
  std::function<cd(double)> f;
  std::optional<cd> limit_minus, limit_plus;

  cd operator()(double x) const { return f(x); }

  // f~(x) = f(x / sqrt(1 - x^2)) on [-1, 1]
  cd compressed(double x) const {
    if (!limit_minus || !limit_plus) throw InputError("function symbol lacks declared limits at infinity");
    if (x <= -1.0) return *limit_minus;
    if (x >= 1.0) return *limit_plus;
    return f(x / std::sqrt(1.0 - x * x));
  }

  static FunctionSymbol constant(cd c) { return {[c](double) { return c; }, c, c}; }
  static FunctionSymbol inverse_square() { return {[](double x) { return cd(1.0 / (1.0 + x * x)); }, 0.0, 0.0}; }
  static FunctionSymbol scaled_inverse_square(double n) {
    return {[n](double x) { return cd(1.0 / (1.0 + x * x / (n * n))); }, 0.0, 0.0};
  }
  static FunctionSymbol bounded_transform() {
    return {[](double x) { return cd(x / std::sqrt(1.0 + x * x)); }, cd(-1.0), cd(1.0)};
  }
};

inline HermitianEig spectral_decomposition(const FiberOperator& F) { return hermitian_eig(compress(F).matrix); }

inline MatXcd apply_function(const HermitianEig& e, const std::function<cd(double)>& g) {
  VecXcd v(e.values.size());
  for (Index i = 0; i < v.size(); ++i) v(i) = g(e.values(i));
  return e.vectors * v.asDiagonal() * e.vectors.adjoint();
}

// T (I + T^2)^{-1/2} in H-orthonormal domain coordinates.
inline MatXcd bounded_transform(const FiberOperator& F) {
  HermitianEig e = spectral_decomposition(F);
  return apply_function(e, [](double x) { return cd(x / std::sqrt(1.0 + x * x)); });
}

// f(T) = f~(bounded transform of T)
inline MatXcd functional_calculus(const FiberOperator& F, const FunctionSymbol& f) {
  if (!f.limit_minus || !f.limit_plus) throw InputError("function symbol lacks declared limits at infinity");
  MatXcd B = bounded_transform(F);
  HermitianEig e = hermitian_eig(B);
  return apply_function(e, [&f](double x) { return f.compressed(std::clamp(x, -1.0, 1.0)); });
}

inline OperatorRep build_hat(const OperatorRep& T) { return hat_operator(T); }

struct ResolventResult {
  MatXcd matrix;  // (T - i mu)^{-1} in domain coordinates
  double norm = 0.0;
  double sigma_min = 0.0;
  bool singular = false;
};

inline ResolventResult resolvent(const FiberOperator& F, double mu, double tol = 1e-12) {
  if (mu == 0.0) throw InputError("resolvent needs mu != 0");
  HermitianModel m = compress(F);
  const Index d = m.matrix.rows();
  MatXcd A = m.matrix - cd(0.0, mu) * MatXcd::Identity(d, d);
  ResolventResult r;
  if (d == 0) return r;
  Eigen::JacobiSVD<MatXcd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecXd& s = svd.singularValues();
  r.sigma_min = s(d - 1);
  if (r.sigma_min <= tol * s(0)) {
    r.singular = true;
    return r;
  }
  r.matrix = svd.matrixV() * s.cwiseInverse().cast<cd>().asDiagonal() * svd.matrixU().adjoint();
  r.norm = 1.0 / r.sigma_min;
  return r;
}

struct SpectrumEntry {
  double value = 0.0;
  double residual = 0.0;
};

inline std::vector<SpectrumEntry> model_spectrum(const FiberOperator& F) {
  HermitianModel m = compress(F);
  HermitianEig e = hermitian_eig(m.matrix);
  std::vector<SpectrumEntry> out;
  for (Index i = 0; i < e.values.size(); ++i) {
    VecXcd v = e.vectors.col(i);
    out.push_back({e.values(i), (m.matrix * v - e.values(i) * v).norm()});
  }
  return out;
}

}  // namespace cstarlab
