#pragma once

#include "cstarlab/regularity.hpp"

#include <map>
#include <set>

namespace cstarlab {

// ---------------------------------------------------------------------------
// Nodal spectral calculus for a symmetric fiber that is selfadjoint on its domain

struct NodalSpectral {
  VecXd values;
  MatXcd vectors;  // H-orthonormal eigenvectors in nodal coordinates
  VecXd metric;

  MatXcd apply(const std::function<cd(double)>& g) const {
    VecXcd d(values.size());
    for (Index i = 0; i < d.size(); ++i) d(i) = g(values(i));
    return vectors * d.asDiagonal() * (vectors.adjoint() * metric.cast<cd>().asDiagonal());
  }
  MatXcd resolvent(cd z) const {
    return apply([z](double x) { return 1.0 / (cd(x) - z); });
  }
};

inline NodalSpectral nodal_spectral(const FiberOperator& F) {
  HermitianModel m = compress(F);
  HermitianEig e = hermitian_eig(m.matrix);
  return {e.values, MatXcd(m.basis) * e.vectors, F.metric};
}

// Operator norm of A on (C^n, metric w).
inline double metric_operator_norm(const MatXcd& A, const VecXd& w) {
  VecXd s = w.cwiseSqrt();
  return spectral_norm(s.cast<cd>().asDiagonal() * A * s.cwiseInverse().cast<cd>().asDiagonal());
}

inline MatXcd metric_adjoint(const MatXcd& A, const VecXd& w) {
  return w.cwiseInverse().cast<cd>().asDiagonal() * A.adjoint() * w.cast<cd>().asDiagonal();
}

inline std::vector<Index> support_nodes(const std::vector<StateSpec>& states) {
  std::set<Index> nodes;
  for (const auto& w : states)
    for (const auto& [p, wt] : w.support()) {
      (void)wt;
      nodes.insert(p);
    }
  return {nodes.begin(), nodes.end()};
}

// ---------------------------------------------------------------------------
// Relatively bounded perturbations

struct PerturbationProblem {
  OperatorRep T;
  OperatorRep V;
  double a = 0.0;
  double b = 0.0;
};

inline void check_problem(const PerturbationProblem& P) {
  if (!P.T || !P.V) throw InputError("perturbation problem needs T and V");
  if (P.T->space() != P.V->space() || P.T->fiber_dim() != P.V->fiber_dim())
    throw InputError("T and V act on different modules");
  if (!(P.a >= 0.0) || !(P.b >= 0.0)) throw InputError("relative bound constants must be nonnegative");
}

inline FiberOperator multiplication_fiber(const VecXcd& v, const VecXd& metric, std::string label = "mult") {
  return bounded_fiber(sparse_diag(v), metric, std::move(label));
}

struct JointProbe {
  MatXcd AT, AV;  // W^{1/2} T B and W^{1/2} V B on an H-orthonormal basis B of dom T ∩ dom V
  MatXcd basis;
};

inline JointProbe joint_probe(const FiberOperator& FT, const FiberOperator& FV) {
  if ((FT.metric - FV.metric).cwiseAbs().maxCoeff() > 1e-14) throw InputError("T and V fibers use different metrics");
  FiberOperator J = sum(FT, FV);
  MatXcd B(domain_basis(J));
  VecXcd s = FT.metric.cwiseSqrt().cast<cd>();
  JointProbe j;
  j.basis = B;
  j.AT = s.asDiagonal() * (FT.action * B);
  j.AV = s.asDiagonal() * (FV.action * B);
  return j;
}

struct RelativeBoundEstimate {
  double a_hat = 0.0;
  double b_hat = 0.0;
  Index samples = 0;
  Index violations = 0;  // against the claimed (a, b), when given
};

// Probes: right singular vectors of T on the joint domain (the top decile sets
// the slope), Gaussian bumps, and random domain vectors.
inline RelativeBoundEstimate relative_bound_estimate(const OperatorRep& T, const OperatorRep& V, Index samples = 100,
                                                     std::uint64_t seed = 11, std::optional<std::pair<double, double>> claimed = {}) {
  check_problem({T, V, 0.0, 0.0});
  Rng rng(seed);
  RelativeBoundEstimate r;
  std::vector<Eigen::Vector3d> rows;  // (|Tx|, |x|, |Vx|)
  std::vector<bool> top;
  for (Index p = 0; p < T->space().size(); ++p) {
    FiberOperator FT = T->fiber(p), FV = V->fiber(p);
    JointProbe j = joint_probe(FT, FV);
    const Index k = j.basis.cols();
    if (k == 0) continue;
    Eigen::BDCSVD<MatXcd> svd(j.AT, Eigen::ComputeThinV);
    const MatXcd& RV = svd.matrixV();
    auto push = [&](const VecXcd& c, bool is_top) {
      double nx = c.norm();
      if (nx == 0.0) return;
      double nt = (j.AT * c).norm(), nv = (j.AV * c).norm();
      if (!std::isfinite(nv)) throw InputError("V is undefined on a domain sample");
      rows.emplace_back(nt / nx, 1.0, nv / nx);
      top.push_back(is_top);
    };
    Index ntop = std::max<Index>(1, k / 10);
    for (Index i = 0; i < RV.cols(); ++i) push(RV.col(i), i < ntop);
    // localized probes
    MatXcd Bd = j.basis;
    VecXcd hw = FT.metric.cast<cd>();
    const Index n = FT.dim();
    for (Index c = 0; c < 9; ++c) {
      double center = (static_cast<double>(c) + 0.5) / 9.0;
      for (double width : {0.02, 0.05}) {
        VecXcd g(n);
        for (Index i = 0; i < n; ++i) {
          double x = static_cast<double>(i) / static_cast<double>(std::max<Index>(1, n - 1)) - center;
          g(i) = std::exp(-0.5 * x * x / (width * width));
        }
        push(Bd.adjoint() * (hw.asDiagonal() * g), false);
      }
    }
    for (Index s = 0; s < samples; ++s) push(random_vector(k, rng), false);
  }
  r.samples = static_cast<Index>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (top[i] && rows[i](0) > 0.0) r.a_hat = std::max(r.a_hat, rows[i](2) / rows[i](0));
  for (const auto& x : rows) r.b_hat = std::max(r.b_hat, x(2) - r.a_hat * x(0));
  if (claimed)
    for (const auto& x : rows)
      if (x(2) > claimed->first * x(0) + claimed->second + 1e-9 * std::max(1.0, x(0))) ++r.violations;
  return r;
}

struct MuScanEntry {
  double mu = 0.0;
  double norm = 0.0;  // max over nodes and both signs of ||V (T -+ i mu)^{-1}||
};

struct KatoRellichVerdict {
  bool holds = false;
  double mu = 0.0;
  double achieved_norm = 0.0;
  std::vector<MuScanEntry> scan;
  RegularityVerdict local;
};

inline double perturbed_resolvent_norm(const FiberOperator& FT, const FiberOperator& FV, double mu) {
  NodalSpectral ns = nodal_spectral(FT);
  MatXcd Vd(FV.action);
  double worst = 0.0;
  for (double sg : {1.0, -1.0}) worst = std::max(worst, metric_operator_norm(Vd * ns.resolvent(cd(0.0, sg * mu)), FT.metric));
  return worst;
}

inline KatoRellichVerdict kato_rellich_check(const PerturbationProblem& P, const std::vector<StateSpec>& states,
                                             int max_doublings = 40, double tau = -1.0) {
  check_problem(P);
  if (P.a >= 1.0)
    throw HypothesisError("relative bound a = " + std::to_string(P.a) + " >= 1; Kato-Rellich does not apply (use wust_check)");
  KatoRellichVerdict v;
  // ||V (T - z)^{-1}||^2 = lambda_max(D^* G D), G = Gram matrix of V on the eigenvectors of T
  std::vector<NodalSpectral> spec;
  std::vector<MatXcd> gram;
  for (Index p : support_nodes(states)) {
    FiberOperator FT = P.T->fiber(p);
    NodalSpectral ns = nodal_spectral(FT);
    MatXcd M = FT.metric.cwiseSqrt().cast<cd>().asDiagonal() * (MatXcd(P.V->fiber(p).action) * ns.vectors);
    gram.push_back(M.adjoint() * M);
    spec.push_back(std::move(ns));
  }
  for (int k = 0; k <= max_doublings; ++k) {
    double mu = std::ldexp(1.0, k);
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i)
      for (double sg : {1.0, -1.0}) {
        VecXcd d(spec[i].values.size());
        for (Index j = 0; j < d.size(); ++j) d(j) = 1.0 / (cd(spec[i].values(j)) - cd(0.0, sg * mu));
        MatXcd A = d.conjugate().asDiagonal() * gram[i] * d.asDiagonal();
        Eigen::SelfAdjointEigenSolver<MatXcd> es(hermitian_part(A), Eigen::EigenvaluesOnly);
        worst = std::max(worst, std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())));
      }
    v.scan.push_back({mu, worst});
    if (worst < 1.0) {
      v.mu = mu;
      v.achieved_norm = worst;
      break;
    }
  }
  v.local = local_global_check(sum_operator(P.T, P.V), states, tau);
  v.holds = v.mu > 0.0 && v.local.selfadjoint && v.local.regular;
  return v;
}

// Closure on the model: the double adjoint of each fiber.
inline OperatorRep closure_operator(const OperatorRep& T) {
  return make_field(
      T->space(), T->fiber_dim(), [T](Index p) { return adjoint(adjoint(T->fiber(p))); }, nullptr,
      "closure(" + T->description() + ")", T->kind());
}

class WustHypothesisError : public HypothesisError {
 public:
  WustHypothesisError(Index node_, double margin_)
      : HypothesisError("<Vx,Vx> <= <Tx,Tx> + b<x,x> fails at node " + std::to_string(node_) + " (margin " +
                        std::to_string(margin_) + ")"),
        node(node_),
        margin(margin_) {}
  Index node;
  double margin;
};

// Smallest b with ||Vx||^2 <= ||Tx||^2 + b||x||^2 on the joint domain of one fiber.
inline double wust_min_offset(const FiberOperator& FT, const FiberOperator& FV) {
  JointProbe j = joint_probe(FT, FV);
  if (j.basis.cols() == 0) return 0.0;
  MatXcd M = j.AV.adjoint() * j.AV - j.AT.adjoint() * j.AT;
  return hermitian_eig(M).values.maxCoeff();
}

struct WustVerdict {
  bool hypothesis_holds = false;
  double b = 0.0;
  double worst_margin = 0.0;  // min over nodes of b - b_min
  Index worst_node = -1;
  double localized_inequality_worst = 0.0;   // max over samples of lhs - rhs, relative
  Index samples = 0;
  RegularityVerdict local;
  bool holds = false;
};

inline WustVerdict wust_check(const PerturbationProblem& P, const std::vector<StateSpec>& states, Index samples = 100,
                              std::uint64_t seed = 5, double tau = -1.0) {
  check_problem(P);
  WustVerdict v;
  v.b = P.b;
  v.worst_margin = 1e300;
  for (Index p : support_nodes(states)) {
    FiberOperator FT = P.T->fiber(p), FV = P.V->fiber(p);
    JointProbe j = joint_probe(FT, FV);
    double bmin = wust_min_offset(FT, FV);
    double scale = std::max(1.0, std::pow(spectral_norm(j.AT), 2));
    double margin = P.b - bmin;
    if (margin < v.worst_margin) v.worst_margin = margin, v.worst_node = p;
    if (margin < -1e-10 * scale) throw WustHypothesisError(p, margin);
  }
  v.hypothesis_holds = true;
  // the inequality localized at each state, on random domain samples
  Rng rng(seed);
  v.localized_inequality_worst = -1e300;
  for (const auto& w : states) {
    LocalizationResult loc = localize_module(P.T, w);
    std::vector<JointProbe> probes;
    for (const auto& [node, wt] : loc.blocks) {
      (void)wt;
      probes.push_back(joint_probe(P.T->fiber(node), P.V->fiber(node)));
    }
    for (Index s = 0; s < samples; ++s) {
      double lhs = 0.0, tx = 0.0, xx = 0.0;
      for (std::size_t b = 0; b < loc.blocks.size(); ++b) {
        double wt = loc.blocks[b].second;
        VecXcd c = random_vector(probes[b].basis.cols(), rng);
        lhs += wt * (probes[b].AV * c).squaredNorm();
        tx += wt * (probes[b].AT * c).squaredNorm();
        xx += wt * c.squaredNorm();
      }
      double rhs = tx + P.b * xx;
      v.localized_inequality_worst = std::max(v.localized_inequality_worst, (lhs - rhs) / std::max(1.0, rhs));
      ++v.samples;
    }
  }
  v.local = local_global_check(closure_operator(sum_operator(P.T, P.V)), states, tau);
  v.holds = v.localized_inequality_worst <= 1e-10 && v.local.selfadjoint && v.local.regular;
  return v;
}

// V = -T + c T (I + T^2)^{-1/2}: relative bound exactly 1, and T + V has a
// bounded selfadjoint closure.
inline PerturbationProblem wust_boundary_instance(const OperatorRep& T, double c) {
  auto fibers = std::make_shared<std::vector<FiberOperator>>();
  for (Index p = 0; p < T->space().size(); ++p) {
    FiberOperator FT = T->fiber(p);
    NodalSpectral ns = nodal_spectral(FT);
    MatXcd G = ns.apply([](double x) { return cd(x / std::sqrt(1.0 + x * x)); });
    SpMat Gs = to_sparse(c * G, 1e-300);
    FiberOperator F;
    F.action = Gs - FT.action;
    F.formal_adjoint = Gs - FT.formal_adjoint;
    F.metric = FT.metric;
    F.constraints = FT.constraints;
    F.label = "-T+c*b(T)";
    fibers->push_back(std::move(F));
  }
  OperatorRep V = make_field(
      T->space(), T->fiber_dim(), [fibers](Index p) { return (*fibers)[static_cast<std::size_t>(p)]; }, nullptr,
      "-T + c T(1+T^2)^{-1/2}");
  return {T, V, 1.0, c * c};
}

// V = -T + v: relative bound 1, but the offset b needed for the inequality grows with the grid.
inline OperatorRep minus_t_plus_mult(const OperatorRep& T, const std::function<double(double)>& v) {
  auto Tp = T;
  return make_field(
      T->space(), T->fiber_dim(),
      [Tp, v](Index p) {
        FiberOperator FT = Tp->fiber(p);
        VecXd t = unit_grid(FT.dim());
        VecXcd vv(FT.dim());
        for (Index i = 0; i < vv.size(); ++i) vv(i) = v(t(i));
        return sum(scaled(FT, -1.0), multiplication_fiber(vv, FT.metric));
      },
      nullptr, "-T+v");
}

// V = a T + v_p(t) with v_p a random real trigonometric polynomial per node;
// b = ||v||_inf^2 / (1 - a^2) makes the C*-inequality hold.
inline PerturbationProblem random_relative_instance(const OperatorRep& T, double a, Rng& rng) {
  if (!(a >= 0.0 && a < 1.0)) throw InputError("random_relative_instance needs 0 <= a < 1");
  const Index nodes = T->space().size();
  const Index n = T->fiber_dim();
  VecXd t = unit_grid(n);
  auto vals = std::make_shared<std::vector<VecXcd>>();
  double sup = 0.0;
  for (Index p = 0; p < nodes; ++p) {
    double c0 = random_uniform(rng, -1.0, 1.0), c1 = random_uniform(rng, -1.0, 1.0), c2 = random_uniform(rng, -1.0, 1.0);
    VecXcd v(n);
    for (Index i = 0; i < n; ++i)
      v(i) = c0 + c1 * std::cos(2.0 * std::numbers::pi * t(i)) + c2 * std::sin(4.0 * std::numbers::pi * t(i));
    sup = std::max(sup, v.cwiseAbs().maxCoeff());
    vals->push_back(v);
  }
  auto Tp = T;
  OperatorRep V = make_field(
      T->space(), n,
      [Tp, a, vals](Index p) {
        FiberOperator FT = Tp->fiber(p);
        return sum(scaled(FT, a), multiplication_fiber((*vals)[static_cast<std::size_t>(p)], FT.metric));
      },
      nullptr, "aT+v");
  return {T, V, a, sup * sup / (1.0 - a * a) * (1.0 + 1e-9)};
}

// ---------------------------------------------------------------------------
// Sum operators S + iT

struct HermiteTruncation {
  Index N = 0;
  MatXcd position, momentum;  // N x N blocks of the oscillator matrices
  MatXcd commutator;          // [P, X] on span{h_0..h_{N-1}} from the padded product
};

inline HermiteTruncation hermite_truncation(Index N) {
  if (N < 2) throw InputError("Hermite truncation needs N >= 2");
  const Index M = N + 2;
  MatXcd a = MatXcd::Zero(M, M);  // annihilation: a h_k = sqrt(k) h_{k-1}
  for (Index k = 1; k < M; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  MatXcd ad = a.adjoint();
  const double r = 1.0 / std::sqrt(2.0);
  MatXcd X = r * (a + ad);
  MatXcd P = cd(0.0, r) * (ad - a);
  HermiteTruncation h;
  h.N = N;
  h.position = X.topLeftCorner(N, N);
  h.momentum = P.topLeftCorner(N, N);
  h.commutator = (P * X - X * P).topLeftCorner(N, N);
  return h;
}

using CommutatorBuilder = std::function<MatXcd(Index node)>;

struct MuNorm {
  double mu = 0.0;
  double norm = 0.0;
};

struct SumProblem {
  OperatorRep S, T;
  Submodule core;
  std::vector<double> mu_grid;
  CommutatorBuilder commutator;  // nodal [S,T]; empty means the product of the fiber matrices
  std::vector<MuNorm> X_norms;
  double X_minus1 = 0.0;
  double C = 0.0;
  double adjoint_formula_residual = 0.0;
  double coret_residual = 0.0;
  double core_residual = 0.0;

  MatXcd comm(Index p) const {
    if (commutator) return commutator(p);
    return model_commutator(p);
  }
  MatXcd model_commutator(Index p) const {
    MatXcd s(S->fiber(p).action), t(T->fiber(p).action);
    return s * t - t * s;
  }
};

inline std::vector<ModuleVector> core_samples(const Submodule& core, Index count, Rng& rng) {
  std::vector<ModuleVector> out;
  for (Index i = 0; i < count; ++i) {
    ModuleVector y = ModuleVector::zeros(core.space(), core.fiber_dim());
    for (const auto& g : core.generators) y = y + g * AlgebraElement(g.space, random_vector(g.space.size(), rng));
    out.push_back(y);
  }
  return out;
}

inline SumProblem build_sum_problem(const OperatorRep& S, const OperatorRep& T, const Submodule& core,
                                    std::vector<double> mu_grid, CommutatorBuilder commutator = nullptr,
                                    Index samples = 20, std::uint64_t seed = 3, double growth_limit = 1e8,
                                    double core_tol = 1e-6) {
  if (!S || !T) throw InputError("sum problem needs S and T");
  if (S->space() != T->space() || S->fiber_dim() != T->fiber_dim()) throw InputError("S and T act on different modules");
  if (core.generators.empty()) throw InputError("sum problem needs a core");
  for (double m : mu_grid)
    if (m == 0.0 || !std::isfinite(m)) throw InputError("mu grid entries must be finite and nonzero");
  const BaseSpace& s = S->space();
  std::vector<StateSpec> pure = all_pure_states(s);
  for (const auto& [op, name] : {std::pair{S, "S"}, std::pair{T, "T"}}) {
    RegularityVerdict v = local_global_check(op, pure);
    if (!v.selfadjoint_regular) throw HypothesisError(std::string(name) + " is not selfadjoint and regular");
  }
  SumProblem P;
  P.S = S;
  P.T = T;
  P.core = core;
  P.mu_grid = std::move(mu_grid);
  P.commutator = std::move(commutator);
  for (const auto& r : check_core(T, core, pure, core_tol)) P.core_residual = std::max(P.core_residual, r.residual);
  if (P.core_residual > core_tol) throw HypothesisError("core is not dense for T (residual " + std::to_string(P.core_residual) + ")");

  Rng rng(seed);
  std::vector<ModuleVector> xs = core_samples(core, samples, rng), ys = core_samples(core, samples, rng);
  std::vector<double> mus = P.mu_grid;
  if (std::find(mus.begin(), mus.end(), -1.0) == mus.end()) mus.push_back(-1.0);
  std::map<double, double> norms;
  for (Index p = 0; p < s.size(); ++p) {
    FiberOperator FS = S->fiber(p), FT = T->fiber(p);
    NodalSpectral ns = nodal_spectral(FS);
    MatXcd C = P.comm(p), Cm = P.model_commutator(p);
    MatXcd Td(FT.action);
    const VecXd& w = FS.metric;
    for (double mu : mus) {
      MatXcd R = ns.resolvent(cd(0.0, mu));
      MatXcd X = C * R;
      double nx = metric_operator_norm(X, w);
      if (!std::isfinite(nx) || nx > growth_limit) throw HypothesisError("X_mu is not bounded (mu = " + std::to_string(mu) + ")");
      norms[mu] = std::max(norms[mu], nx);
      MatXcd Xadj = -ns.resolvent(cd(0.0, -mu)) * C;
      MatXcd Xm = Cm * R;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        VecXcd x = xs[k].values.col(p), y = ys[k].values.col(p);
        double scale = std::max(1e-300, metric_norm(x, w) * metric_norm(y, w));
        cd lhs = metric_inner(X * x, y, w), rhs = metric_inner(x, Xadj * y, w);
        P.adjoint_formula_residual = std::max(P.adjoint_formula_residual, std::abs(lhs - rhs) / scale);
        VecXcd a = Td * (R * x), b = R * (Td * x) + R * (Xm * x);
        P.coret_residual = std::max(P.coret_residual, metric_norm(a - b, w) / std::max(1e-300, metric_norm(x, w)));
      }
    }
  }
  for (double mu : P.mu_grid) P.X_norms.push_back({mu, norms[mu]});
  P.X_minus1 = norms[-1.0];
  P.C = 0.5 * (1.0 + P.X_minus1 * P.X_minus1);
  return P;
}

struct RnRow {
  int n = 0;
  double Rn_xi = 0.0;      // max over samples of ||R_n xi||
  double Rn_adj_xi = 0.0;  // max over samples of ||R_n^* xi||
  double Rn_norm = 0.0;
  double envelope = 0.0;   // ||X_{-1}|| * ||(S+i)(S-in)^{-1}||
  double factorization_residual = 0.0;
};

struct RnReport {
  std::vector<RnRow> rows;
  bool vanishes = false;
  bool envelope_ok = true;
  double last_ratio = 0.0;  // last / first
};

inline RnReport strong_vanishing_Rn(const SumProblem& P, const std::vector<ModuleVector>& xis, const std::vector<int>& ns,
                                    double tol = 1e-2) {
  if (xis.empty() || ns.empty()) throw InputError("strong_vanishing_Rn needs samples and an n-list");
  RnReport rep;
  const BaseSpace& s = P.S->space();
  for (int n : ns) {
    if (n < 1) throw InputError("n must be positive");
    RnRow row;
    row.n = n;
    const double dn = static_cast<double>(n);
    for (Index p = 0; p < s.size(); ++p) {
      FiberOperator FS = P.S->fiber(p);
      NodalSpectral sp = nodal_spectral(FS);
      const VecXd& w = FS.metric;
      MatXcd C = P.comm(p);
      MatXcd Q = sp.apply([dn](double x) { return 1.0 / (cd(0.0, x / dn) + 1.0); });
      MatXcd Rn = cd(0.0, 1.0 / dn) * Q * C * Q;
      MatXcd Rs = metric_adjoint(Rn, w);
      MatXcd Xm1 = C * sp.resolvent(cd(0.0, -1.0));
      MatXcd F = sp.apply([dn](double x) { return (cd(x) + cd(0.0, 1.0)) / (cd(x) - cd(0.0, dn)); });
      MatXcd Rf = Q * Xm1 * F;
      row.Rn_norm = std::max(row.Rn_norm, metric_operator_norm(Rn, w));
      row.envelope = std::max(row.envelope, metric_operator_norm(Xm1, w) * metric_operator_norm(F, w));
      row.factorization_residual = std::max(row.factorization_residual, metric_operator_norm(Rn - Rf, w));
      for (const auto& xi : xis) {
        VecXcd x = xi.values.col(p);
        row.Rn_xi = std::max(row.Rn_xi, metric_norm(Rn * x, w));
        row.Rn_adj_xi = std::max(row.Rn_adj_xi, metric_norm(Rs * x, w));
      }
    }
    if (row.Rn_norm > row.envelope * (1.0 + 1e-9) + 1e-12) rep.envelope_ok = false;
    rep.rows.push_back(row);
  }
  const RnRow& a = rep.rows.front();
  const RnRow& b = rep.rows.back();
  double first = std::max(a.Rn_xi, a.Rn_adj_xi);
  double last = std::max(b.Rn_xi, b.Rn_adj_xi);
  rep.last_ratio = first > 0.0 ? last / first : 0.0;
  rep.vanishes = last <= tol * first || last <= 1e-14;
  return rep;
}

struct GraphComparisonResult {
  bool holds = true;
  double C = 0.0;
  double worst_commutator = 0.0;  // min over samples/nodes/signs of rhs - lhs (>= 0 expected)
  double worst_graph = 0.0;
  Index witness_node = -1;
  Index witness_sample = -1;
  std::string witness_check;
};

// +- i<[S,T]xi,xi> <= 1/2 <S xi,S xi> + C<xi,xi> and
// <(S +- iT)xi,(S +- iT)xi> >= 1/2 <S xi,S xi> + <T xi,T xi> - C<xi,xi>, nodewise.
inline GraphComparisonResult graph_comparison_check(const SumProblem& P, const std::vector<ModuleVector>& xis,
                                                    std::optional<double> C_override = {}, double tol = 1e-9) {
  GraphComparisonResult r;
  r.C = C_override ? *C_override : P.C;
  r.worst_commutator = 1e300;
  r.worst_graph = 1e300;
  const BaseSpace& s = P.S->space();
  for (Index p = 0; p < s.size(); ++p) {
    FiberOperator FS = P.S->fiber(p), FT = P.T->fiber(p);
    MatXcd Sd(FS.action), Td(FT.action), C = P.comm(p);
    const VecXd& w = FS.metric;
    for (std::size_t k = 0; k < xis.size(); ++k) {
      VecXcd x = xis[k].values.col(p);
      double xx = std::real(metric_inner(x, x, w));
      VecXcd sx = Sd * x, tx = Td * x;
      double ss = std::real(metric_inner(sx, sx, w)), tt = std::real(metric_inner(tx, tx, w));
      double q = std::real(cd(0.0, 1.0) * metric_inner(C * x, x, w));
      double scale = std::max(1.0, ss + tt + xx);
      for (double sg : {1.0, -1.0}) {
        double res1 = 0.5 * ss + r.C * xx - sg * q;
        VecXcd d = sx + cd(0.0, sg) * tx;
        double res2 = std::real(metric_inner(d, d, w)) - (0.5 * ss + tt - r.C * xx);
        r.worst_commutator = std::min(r.worst_commutator, res1 / scale);
        r.worst_graph = std::min(r.worst_graph, res2 / scale);
        if (r.holds && (res1 < -tol * scale || res2 < -tol * scale)) {
          r.holds = false;
          r.witness_node = p;
          r.witness_sample = static_cast<Index>(k);
          r.witness_check = res1 < -tol * scale ? "commutator estimate" : "graph estimate";
        }
      }
    }
  }
  return r;
}

// [[0, S - iT],[S + iT, 0]] on (dom S ∩ dom T)^2.
inline FiberOperator sum_fiber(const FiberOperator& S, const FiberOperator& T) {
  if (S.dim() != T.dim()) throw InputError("sum_fiber: fiber sizes differ");
  if ((S.metric - T.metric).cwiseAbs().maxCoeff() > 1e-14) throw InputError("sum_fiber: metrics differ");
  const cd i(0.0, 1.0);
  FiberOperator F;
  F.action = off_diag(SpMat(S.action - i * T.action), SpMat(S.action + i * T.action));
  F.formal_adjoint = off_diag(SpMat(S.formal_adjoint - i * T.formal_adjoint), SpMat(S.formal_adjoint + i * T.formal_adjoint));
  F.metric = VecXd(2 * S.dim());
  F.metric << S.metric, S.metric;
  SpMat J = vstack(S.constraints, T.constraints);
  F.constraints = block_diag(J, J);
  F.label = "D";
  return F;
}

inline OperatorRep build_sum_operator(const SumProblem& P) {
  auto S = P.S, T = P.T;
  return make_field(
      S->space(), 2 * S->fiber_dim(), [S, T](Index p) { return sum_fiber(S->fiber(p), T->fiber(p)); }, nullptr,
      "[[0,S-iT],[S+iT,0]]", OpKind::Sum);
}

struct SumVerdict {
  RegularityVerdict local;
  double localization_residual = 0.0;  // localized block matrix vs block of localized matrices
  bool domain_dims_ok = true;
  bool holds = false;
};

inline SumVerdict sum_selfadjoint_regular_check(const SumProblem& P, const OperatorRep& D,
                                                const std::vector<StateSpec>& states, double tau = -1.0) {
  SumVerdict v;
  for (const auto& w : states) {
    LocalOperator LD = localize_operator(D, localize_module(D, w));
    LocalOperator LS = localize_operator(P.S, localize_module(P.S, w));
    LocalOperator LT = localize_operator(P.T, localize_module(P.T, w));
    FiberOperator A = LD.assembled();
    Index dims = 0, dimD = domain_dim(A);
    std::vector<FiberOperator> parts;
    for (std::size_t b = 0; b < LS.blocks.size(); ++b) {
      parts.push_back(sum_fiber(LS.blocks[b], LT.blocks[b]));
      dims += domain_dim(sum(LS.blocks[b], LT.blocks[b]));
    }
    SpMat act = parts.front().action;
    for (std::size_t b = 1; b < parts.size(); ++b) act = block_diag(act, parts[b].action);
    v.localization_residual = std::max(v.localization_residual, max_abs(SpMat(A.action - act)));
    if (dimD != 2 * dims) v.domain_dims_ok = false;
  }
  v.local = local_global_check(D, states, tau);
  v.holds = v.local.selfadjoint && v.local.regular && v.local.selfadjoint_regular && v.localization_residual <= 1e-8 &&
            v.domain_dims_ok;
  return v;
}

// Eigenvalues of a symmetric fiber whose eigenvectors carry negligible weight on
// the truncation tail; degenerate clusters are split by their tail weight.
inline std::vector<double> resolved_spectrum(const FiberOperator& F, const std::vector<Index>& tail, double tol = 1e-6,
                                             double cluster = 1e-8) {
  NodalSpectral ns = nodal_spectral(F);
  const Index m = ns.values.size();
  std::vector<double> out;
  Index i = 0;
  VecXd w = F.metric;
  while (i < m) {
    Index j = i + 1;
    while (j < m && ns.values(j) - ns.values(j - 1) <= cluster * std::max(1.0, std::abs(ns.values(j)))) ++j;
    MatXcd V = ns.vectors.middleCols(i, j - i);
    MatXcd Wt = MatXcd::Zero(j - i, j - i);
    for (Index t : tail) Wt += w(t) * V.row(t).adjoint() * V.row(t);
    VecXd tw = hermitian_eig(Wt).values;
    for (Index k = 0; k < tw.size(); ++k)
      if (tw(k) <= tol) out.push_back(ns.values(i + k));
    i = j;
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<double> oscillator_spectrum(int kmax) {
  std::vector<double> ev{0.0};
  for (int k = 1; k <= kmax; ++k) {
    ev.push_back(std::sqrt(2.0 * k));
    ev.push_back(-std::sqrt(2.0 * k));
  }
  std::sort(ev.begin(), ev.end());
  return ev;
}

struct HermiteSumCase {
  OperatorRep S, T;
  Submodule core;
  std::vector<ModuleVector> samples;  // low-degree joint-domain vectors
  HermiteTruncation h;
};

// Momentum S and position T truncated to span{h_0..h_{N-1}}, constant over the base.
inline HermiteSumCase hermite_sum_case(Index N, const BaseSpace& base = BaseSpace::single_point(), Index samples = 100,
                                       std::uint64_t seed = 17) {
  HermiteSumCase c;
  c.h = hermite_truncation(N);
  c.S = constant_field(base, bounded_fiber(c.h.momentum, VecXd(), "P"), OpKind::Matrix, "momentum");
  c.T = constant_field(base, bounded_fiber(c.h.position, VecXd(), "X"), OpKind::Matrix, "position");
  std::vector<ModuleVector> gens;
  for (Index k = 0; k < N; ++k) gens.push_back(ModuleVector::constant(base, VecXcd::Unit(N, k)));
  c.core = Submodule(std::move(gens));
  Rng rng(seed);
  const Index deg = std::min<Index>(N - 3, 20);
  VecXcd g0 = VecXcd::Unit(N, 0);
  c.samples.push_back(ModuleVector::constant(base, g0));
  for (Index s = 1; s < samples; ++s) {
    VecXcd v = VecXcd::Zero(N);
    v.head(deg + 1) = random_vector(deg + 1, rng);
    c.samples.push_back(ModuleVector::constant(base, v));
  }
  return c;
}

inline std::vector<Index> hermite_tail(Index N, Index width = 2) {
  std::vector<Index> t;
  for (Index k = N - width; k < N; ++k) {
    t.push_back(k);
    t.push_back(N + k);
  }
  return t;
}

}  // namespace cstarlab
