#pragma once

#include "cstarlab/unbounded_ops.hpp"

namespace cstarlab {

// E^omega for E = C(X, H): the fibers at nodes of positive weight, stacked.
// Coordinates of i_omega(f) are the stacked values f(p); the weights sit in
// the metric, so ||i_omega f||^2 = omega(<f,f>).
struct LocalizationResult {
  StateSpec state;
  Index fiber_dim = 0;
  std::vector<std::pair<Index, double>> blocks;  // (node, weight)
  std::vector<VecXd> fiber_metric;               // per block
  std::vector<Index> null_nodes;                 // span N_omega

  Index dim() const { return fiber_dim * static_cast<Index>(blocks.size()); }

  VecXd metric() const {
    VecXd m(dim());
    for (std::size_t b = 0; b < blocks.size(); ++b)
      m.segment(static_cast<Index>(b) * fiber_dim, fiber_dim) = blocks[b].second * fiber_metric[b];
    return m;
  }

  VecXcd map(const ModuleVector& f) const {
    if (f.space != state.space() || f.fiber_dim != fiber_dim) throw InputError("i_omega: vector shape mismatch");
    VecXcd out(dim());
    for (std::size_t b = 0; b < blocks.size(); ++b)
      out.segment(static_cast<Index>(b) * fiber_dim, fiber_dim) = f.values.col(blocks[b].first);
    return out;
  }

  double norm(const VecXcd& v) const { return metric_norm(v, metric()); }
  cd inner(const VecXcd& u, const VecXcd& v) const { return metric_inner(u, v, metric()); }
};

inline LocalizationResult localize_module(const BaseSpace& s, Index fiber_dim, const StateSpec& w,
                                          const std::function<VecXd(Index)>& fiber_metric = nullptr) {
  if (w.space() != s) throw InputError("localize_module: state lives on another space");
  if (fiber_dim < 1) throw InputError("localize_module: fiber dimension must be positive");
  LocalizationResult L;
  L.state = w;
  L.fiber_dim = fiber_dim;
  L.blocks = w.support();
  if (L.blocks.empty()) throw InputError("zero state");
  for (const auto& b : L.blocks) {
    VecXd m = fiber_metric ? fiber_metric(b.first) : VecXd(VecXd::Ones(fiber_dim));
    if (m.size() != fiber_dim) throw InputError("localize_module: fiber metric size mismatch");
    L.fiber_metric.push_back(m);
  }
  if (!w.is_pure())
    for (Index p = 0; p < s.size(); ++p)
      if (w.weights()(p) == 0.0) L.null_nodes.push_back(p);
  return L;
}

inline LocalizationResult localize_module(const OperatorRep& T, const StateSpec& w) {
  return localize_module(T->space(), T->fiber_dim(), w, [T](Index p) { return T->fiber(p).metric; });
}

struct LocalOperator {
  LocalizationResult loc;
  std::vector<FiberOperator> blocks;

  // Block-diagonal assembly acting on E^omega with the weighted metric.
  FiberOperator assembled() const {
    FiberOperator F = blocks.front();
    for (std::size_t b = 1; b < blocks.size(); ++b) {
      F.action = block_diag(F.action, blocks[b].action);
      F.formal_adjoint = block_diag(F.formal_adjoint, blocks[b].formal_adjoint);
      F.constraints = block_diag(F.constraints, blocks[b].constraints);
    }
    F.metric = loc.metric();
    F.label = blocks.size() == 1 ? blocks.front().label : "local(" + loc.state.describe() + ")";
    return F;
  }

  VecXcd apply(const VecXcd& v) const {
    VecXcd out(v.size());
    const Index d = loc.fiber_dim;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      out.segment(static_cast<Index>(b) * d, d) = blocks[b].action * v.segment(static_cast<Index>(b) * d, d);
    return out;
  }
};

inline LocalOperator localize_operator(const OperatorRep& T, const LocalizationResult& loc) {
  if (T->space() != loc.state.space() || T->fiber_dim() != loc.fiber_dim)
    throw InputError("localize_operator: operator acts on another module");
  LocalOperator L;
  L.loc = loc;
  for (std::size_t b = 0; b < loc.blocks.size(); ++b) {
    FiberOperator F = T->fiber(loc.blocks[b].first);
    if ((F.metric - loc.fiber_metric[b]).cwiseAbs().maxCoeff() > 1e-14)
      throw InputError("localize_operator: fiber metric differs from the localization");
    L.blocks.push_back(std::move(F));
  }
  return L;
}

inline LocalOperator localize_adjoint(const OperatorRep& T, const LocalizationResult& loc) {
  return localize_operator(adjoint_operator(T), loc);
}

// Block-wise defect indices; kernels of a block-diagonal operator split over blocks.
inline DefectReport local_defects(const LocalOperator& L, double tau = -1.0) {
  DefectReport total;
  total.sigma_plus = VecXd::Constant(1, 1e300);
  total.sigma_minus = VecXd::Constant(1, 1e300);
  double best_margin_ratio = 1e300;
  for (const auto& F : L.blocks) {
    DefectReport r = defect_indices(F, tau);
    total.n_plus += r.n_plus;
    total.n_minus += r.n_minus;
    total.dim += r.dim;
    total.tau = r.tau;
    total.sigma_max = std::max(total.sigma_max, r.sigma_max);
    // keep the block whose smallest singular value sits closest to its threshold
    double ratio = r.sigma_min() / std::max(r.threshold, 1e-300);
    if (std::abs(std::log10(std::max(ratio, 1e-300))) < best_margin_ratio) {
      best_margin_ratio = std::abs(std::log10(std::max(ratio, 1e-300)));
      total.sigma_plus = r.sigma_plus;
      total.sigma_minus = r.sigma_minus;
      total.threshold = r.threshold;
    }
  }
  return total;
}

// Graph-orthonormal basis of a subspace spanned by the columns of S (nodal
// coordinates); directions with graph Gram eigenvalue below rel_tol are dropped.
inline MatXcd graph_orthonormalize(const FiberOperator& F, const MatXcd& S, double rel_tol = 1e-12) {
  if (S.cols() == 0) return S;
  MatXcd MS = F.action * S;
  MatXcd G = S.adjoint() * F.metric.cast<cd>().asDiagonal() * S + MS.adjoint() * F.metric.cast<cd>().asDiagonal() * MS;
  HermitianEig e = hermitian_eig(G);
  double top = e.values.maxCoeff();
  std::vector<Index> keep;
  for (Index i = 0; i < e.values.size(); ++i)
    if (e.values(i) > rel_tol * top) keep.push_back(i);
  MatXcd Q(S.rows(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    Q.col(static_cast<Index>(j)) = S * e.vectors.col(keep[j]) / std::sqrt(e.values(keep[j]));
  return Q;
}

inline MatXcd graph_orthonormal_domain_basis(const FiberOperator& F) {
  return graph_orthonormalize(F, MatXcd(domain_basis(F)));
}

struct CoreReport {
  StateSpec state;
  Index dim = 0;
  double residual = 0.0;
  double tol = 0.0;
  bool is_core = false;
};

// Targets per node: columns in nodal coordinates of the fiber. Empty means a
// graph-orthonormal basis of the whole fiber domain.
using TargetBuilder = std::function<MatXcd(Index node, const FiberOperator&)>;

inline double core_residual_block(const FiberOperator& F, const MatXcd& gens, const MatXcd& targets) {
  MatXcd S(F.dim(), gens.cols());
  for (Index j = 0; j < gens.cols(); ++j) {
    VecXcd g = gens.col(j);
    double r = constraint_residual(F, g);
    if (r > 1e-3) throw InputError("check_core: generator outside the operator domain");
    S.col(j) = r > 0.0 ? project_to_domain(F, g) : g;
  }
  MatXcd Q = graph_orthonormalize(F, S);
  const VecXcd w = F.metric.cast<cd>();
  double worst = 0.0;
  for (Index j = 0; j < targets.cols(); ++j) {
    VecXcd t = targets.col(j);
    double tn2 = std::real(graph_inner(F, t, t));
    if (tn2 == 0.0) continue;
    double proj2 = 0.0;
    if (Q.cols()) {
      VecXcd Mt = F.action * t;
      MatXcd MQ = F.action * Q;
      VecXcd c = Q.adjoint() * w.asDiagonal() * t + MQ.adjoint() * w.asDiagonal() * Mt;
      proj2 = c.squaredNorm();
    }
    worst = std::max(worst, std::sqrt(std::max(0.0, tn2 - proj2) / tn2));
  }
  return worst;
}

inline std::vector<CoreReport> check_core(const OperatorRep& T, const Submodule& sub, const std::vector<StateSpec>& states,
                                          double tol = 1e-6, const TargetBuilder& targets = nullptr) {
  if (states.empty()) throw InputError("check_core: empty state list");
  if (sub.space() != T->space() || sub.fiber_dim() != T->fiber_dim())
    throw InputError("check_core: subdomain lives in another module");
  std::vector<CoreReport> out;
  for (const auto& w : states) {
    LocalizationResult loc = localize_module(T, w);
    CoreReport r;
    r.state = w;
    r.dim = loc.dim();
    r.tol = tol;
    for (const auto& [node, weight] : loc.blocks) {
      (void)weight;
      FiberOperator F = T->fiber(node);
      MatXcd gens(F.dim(), static_cast<Index>(sub.generators.size()));
      for (std::size_t j = 0; j < sub.generators.size(); ++j) gens.col(static_cast<Index>(j)) = sub.generators[j].values.col(node);
      MatXcd tg = targets ? targets(node, F) : graph_orthonormal_domain_basis(F);
      r.residual = std::max(r.residual, core_residual_block(F, gens, tg));
    }
    r.is_core = r.residual <= tol;
    out.push_back(r);
  }
  return out;
}

// Trigonometric polynomials e^{2 pi i k t}, |k| <= m, on an m-independent grid.
inline Submodule trigonometric_core(const BaseSpace& s, Index fiber_n, int m) {
  VecXd t = unit_grid(fiber_n);
  std::vector<ModuleVector> gens;
  for (int k = -m; k <= m; ++k) {
    VecXcd v(fiber_n);
    for (Index i = 0; i < fiber_n; ++i) v(i) = std::polar(1.0, 2.0 * std::numbers::pi * k * t(i));
    gens.push_back(ModuleVector::constant(s, v));
  }
  return Submodule(std::move(gens));
}

inline std::vector<StateSpec> all_pure_states(const BaseSpace& s) {
  std::vector<StateSpec> out;
  for (Index p = 0; p < s.size(); ++p) out.push_back(StateSpec::pure(s, p));
  return out;
}

// | ||i(x)||^2 + ||T^w i(x)||^2 - w(<x,x>_T) |, relative; x must lie in dom(T).
inline double graph_norm_identity_residual(const OperatorRep& T, const StateSpec& w, const ModuleVector& x) {
  LocalOperator L = localize_operator(T, localize_module(T, w));
  VecXcd v = L.loc.map(x), Tv = L.apply(v);
  double lhs = L.loc.inner(v, v).real() + L.loc.inner(Tv, Tv).real();
  double rhs = evaluate_state(w, graph_inner_product(GraphModule(T), x, x)).real();
  return std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs));
}

}  // namespace cstarlab
