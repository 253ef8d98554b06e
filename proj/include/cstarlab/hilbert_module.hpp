#pragma once

#include "cstarlab/operator_rep.hpp"

namespace cstarlab {

// f in C(X, H): column p holds f(p).
struct ModuleVector {
  BaseSpace space;
  Index fiber_dim = 0;
  MatXcd values;

  ModuleVector() = default;
  ModuleVector(BaseSpace s, MatXcd v) : space(std::move(s)), fiber_dim(v.rows()), values(std::move(v)) {
    if (values.cols() != space.size()) throw InputError("ModuleVector: one fiber vector per node required");
    if (fiber_dim < 1) throw InputError("ModuleVector: fiber dimension must be positive");
    if (!values.allFinite()) throw InputError("ModuleVector: non-finite entries");
  }

  static ModuleVector zeros(const BaseSpace& s, Index d) { return {s, MatXcd::Zero(d, s.size())}; }

  static ModuleVector constant(const BaseSpace& s, const VecXcd& v) {
    MatXcd m(v.size(), s.size());
    for (Index p = 0; p < s.size(); ++p) m.col(p) = v;
    return {s, m};
  }

  template <class F>
  static ModuleVector from_function(const BaseSpace& s, Index d, F&& f) {
    MatXcd m(d, s.size());
    for (Index p = 0; p < s.size(); ++p) m.col(p) = f(s.coordinate(p));
    return {s, m};
  }

  // scalar function times a fixed fiber vector
  static ModuleVector scalar_times(const AlgebraElement& a, const VecXcd& v) {
    MatXcd m(v.size(), a.size());
    for (Index p = 0; p < a.size(); ++p) m.col(p) = a(p) * v;
    return {a.space, m};
  }

  static ModuleVector random(const BaseSpace& s, Index d, Rng& rng) {
    MatXcd m(d, s.size());
    for (Index p = 0; p < s.size(); ++p) m.col(p) = random_vector(d, rng);
    return {s, m};
  }

  VecXcd at(Index p) const { return values.col(p); }
};

inline void require_same_shape(const ModuleVector& f, const ModuleVector& g, const char* what) {
  if (f.space != g.space) throw InputError(std::string(what) + ": space mismatch");
  if (f.fiber_dim != g.fiber_dim) throw InputError(std::string(what) + ": fiber dimension mismatch");
}

inline ModuleVector operator+(const ModuleVector& f, const ModuleVector& g) {
  require_same_shape(f, g, "module sum");
  return {f.space, f.values + g.values};
}

inline ModuleVector operator-(const ModuleVector& f, const ModuleVector& g) {
  require_same_shape(f, g, "module difference");
  return {f.space, f.values - g.values};
}

inline ModuleVector operator*(cd c, const ModuleVector& f) { return {f.space, c * f.values}; }

// right action of the algebra
inline ModuleVector operator*(const ModuleVector& f, const AlgebraElement& a) {
  if (f.space != a.space) throw InputError("module action: space mismatch");
  MatXcd m = f.values;
  for (Index p = 0; p < m.cols(); ++p) m.col(p) *= a(p);
  return {f.space, m};
}

// <f,g>(x) = <f(x), g(x)>_H, conjugate-linear in f.
inline AlgebraElement inner_product(const ModuleVector& f, const ModuleVector& g) {
  require_same_shape(f, g, "inner_product");
  VecXcd v(f.space.size());
  for (Index p = 0; p < v.size(); ++p) v(p) = f.values.col(p).dot(g.values.col(p));
  return {f.space, v};
}

inline double module_norm(const ModuleVector& f) {
  double m = 0.0;
  for (Index p = 0; p < f.values.cols(); ++p) m = std::max(m, f.values.col(p).squaredNorm());
  return std::sqrt(m);
}

struct Submodule {
  std::vector<ModuleVector> generators;

  Submodule() = default;
  explicit Submodule(std::vector<ModuleVector> g) : generators(std::move(g)) {
    if (generators.empty()) throw InputError("Submodule needs at least one generator");
    for (const auto& x : generators) require_same_shape(x, generators.front(), "Submodule");
  }
  const BaseSpace& space() const { return generators.front().space; }
  Index fiber_dim() const { return generators.front().fiber_dim; }

  // Orthonormal basis of span{g_j(p)}.
  MatXcd span_at(Index p, double rel_tol = 1e-12) const {
    MatXcd G(fiber_dim(), static_cast<Index>(generators.size()));
    for (std::size_t j = 0; j < generators.size(); ++j) G.col(static_cast<Index>(j)) = generators[j].values.col(p);
    if (G.norm() == 0.0) return MatXcd(fiber_dim(), 0);
    return range_basis(G, rel_tol);
  }
};

struct DistanceResult {
  double delta = 0.0;
  VecXd per_node;
};

inline DistanceResult submodule_distance(const Submodule& L, const ModuleVector& x0) {
  require_same_shape(L.generators.front(), x0, "submodule_distance");
  DistanceResult r;
  r.per_node.resize(x0.space.size());
  for (Index p = 0; p < x0.space.size(); ++p) {
    MatXcd Q = L.span_at(p);
    VecXcd x = x0.values.col(p);
    VecXcd res = Q.cols() ? VecXcd(x - Q * (Q.adjoint() * x)) : x;
    r.per_node(p) = res.squaredNorm();
  }
  r.delta = r.per_node.size() ? r.per_node.maxCoeff() : 0.0;
  return r;
}

// Applies the fiber actions nodewise. Domain membership is the caller's
// business; see in_module_domain.
inline ModuleVector apply(const OperatorRep& T, const ModuleVector& x) {
  if (T->space() != x.space || T->fiber_dim() != x.fiber_dim) throw InputError("apply: operator/vector shape mismatch");
  MatXcd out(x.fiber_dim, x.space.size());
  for (Index p = 0; p < x.space.size(); ++p) out.col(p) = T->fiber(p).action * x.values.col(p);
  return {x.space, out};
}

inline bool in_module_domain(const OperatorRep& T, const ModuleVector& x, double tol = 1e-8) {
  for (Index p = 0; p < x.space.size(); ++p)
    if (!in_domain(T->fiber(p), x.values.col(p), tol)) return false;
  return true;
}

// Nodewise H-orthogonal projection onto the fiber domains.
inline ModuleVector project_to_module_domain(const OperatorRep& T, const ModuleVector& x) {
  MatXcd out(x.fiber_dim, x.space.size());
  for (Index p = 0; p < x.space.size(); ++p) out.col(p) = project_to_domain(T->fiber(p), x.values.col(p));
  return {x.space, out};
}

inline ModuleVector random_domain_element(const OperatorRep& T, Rng& rng) {
  MatXcd out(T->fiber_dim(), T->space().size());
  for (Index p = 0; p < T->space().size(); ++p) out.col(p) = random_domain_vector(T->fiber(p), rng);
  return {T->space(), out};
}

// dom(T) with <x,y>_T = <x,y> + <Tx,Ty>. Fibers may carry a quadrature metric
// (discretized function spaces), so inner products here use the fiber metric.
struct GraphModule {
  OperatorRep base;
  bool closed = true;

  explicit GraphModule(OperatorRep T, bool is_closed = true) : base(std::move(T)), closed(is_closed) {}
};

inline AlgebraElement metric_inner_product(const OperatorRep& T, const ModuleVector& x, const ModuleVector& y) {
  require_same_shape(x, y, "metric_inner_product");
  VecXcd v(x.space.size());
  for (Index p = 0; p < v.size(); ++p) v(p) = metric_inner(x.values.col(p), y.values.col(p), T->fiber(p).metric);
  return {x.space, v};
}

inline AlgebraElement graph_inner_product(const GraphModule& G, const ModuleVector& x, const ModuleVector& y,
                                          double tol = 1e-8) {
  require_same_shape(x, y, "graph_inner_product");
  if (G.base->space() != x.space || G.base->fiber_dim() != x.fiber_dim)
    throw InputError("graph_inner_product: vector shape differs from the operator's module");
  VecXcd v(x.space.size());
  for (Index p = 0; p < v.size(); ++p) {
    FiberOperator F = G.base->fiber(p);
    if (!in_domain(F, x.values.col(p), tol) || !in_domain(F, y.values.col(p), tol))
      throw InputError("graph_inner_product: vector outside the recorded domain at node " + std::to_string(p));
    v(p) = graph_inner(F, x.values.col(p), y.values.col(p));
  }
  return {x.space, v};
}

}  // namespace cstarlab
