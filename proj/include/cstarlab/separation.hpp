#pragma once

#include "cstarlab/hilbert_module.hpp"
#include "cstarlab/lp.hpp"

#include <variant>

namespace cstarlab {

struct ConvexHull {
  std::vector<ModuleVector> vertices;

  ModuleVector combine(const VecXd& lambda) const {
    if (lambda.size() != static_cast<Index>(vertices.size())) throw InputError("hull weights length mismatch");
    MatXcd m = MatXcd::Zero(vertices.front().fiber_dim, vertices.front().space.size());
    for (std::size_t k = 0; k < vertices.size(); ++k) m += lambda(static_cast<Index>(k)) * vertices[k].values;
    return {vertices.front().space, m};
  }
};

struct SeparationProblem {
  std::variant<Submodule, ConvexHull> L;
  ModuleVector x0;
  std::vector<AlgebraElement> A_samples;
  double delta = 0.0;
};

struct SeparationCertificate {
  enum class Kind { PureState, MixedState };
  StateSpec state;
  double margin = 0.0;
  Kind kind = Kind::PureState;
  double delta = 0.0;       // inf over L of ||y - x0||^2 (hull case: upper bound from the best mixture found)
  double game_value = 0.0;  // LP value at termination
  int iterations = 0;
};

inline std::string to_string(SeparationCertificate::Kind k) {
  return k == SeparationCertificate::Kind::PureState ? "PureState" : "MixedState";
}

inline AlgebraElement squared_distance_element(const ModuleVector& y, const ModuleVector& x0) {
  ModuleVector d = y - x0;
  return inner_product(d, d);
}

// Elements <y - x0, y - x0> for random y in L.
inline std::vector<AlgebraElement> sample_A(const SeparationProblem& P, Index count, Rng& rng) {
  std::vector<AlgebraElement> out;
  for (Index i = 0; i < count; ++i) {
    ModuleVector y;
    if (const auto* sub = std::get_if<Submodule>(&P.L)) {
      y = ModuleVector::zeros(P.x0.space, P.x0.fiber_dim);
      for (const auto& g : sub->generators) {
        VecXcd coeff = random_vector(g.space.size(), rng);
        y = y + g * AlgebraElement(g.space, coeff);
      }
    } else {
      const auto& hull = std::get<ConvexHull>(P.L);
      VecXd lam(static_cast<Index>(hull.vertices.size()));
      std::exponential_distribution<double> ex(1.0);
      for (Index k = 0; k < lam.size(); ++k) lam(k) = ex(rng);
      y = hull.combine(lam / lam.sum());
    }
    out.push_back(squared_distance_element(y, P.x0));
  }
  return out;
}

inline SeparationProblem make_problem(const Submodule& L, const ModuleVector& x0) {
  SeparationProblem P;
  require_same_shape(L.generators.front(), x0, "separation problem");
  P.L = L;
  P.x0 = x0;
  P.delta = submodule_distance(L, x0).delta;
  return P;
}

inline SeparationProblem make_problem(const ConvexHull& H, const ModuleVector& x0) {
  if (H.vertices.empty()) throw InputError("convex hull needs at least one vertex");
  for (const auto& v : H.vertices) require_same_shape(v, x0, "separation problem");
  SeparationProblem P;
  P.L = H;
  P.x0 = x0;
  return P;
}

// inf over y in L of omega(<y - x0, y - x0>) for a per-point-span submodule:
// nodal coefficients are independent, so the infimum is taken nodewise.
inline double state_margin(const Submodule& L, const ModuleVector& x0, const StateSpec& w) {
  DistanceResult d = submodule_distance(L, x0);
  return std::real(evaluate_state(w, AlgebraElement(x0.space, d.per_node.cast<cd>())));
}

struct HullData {
  Eigen::MatrixXd G;  // G[k*m + l](p) = Re <v_k(p) - x0(p), v_l(p) - x0(p)>, stored per node
  Index m = 0, nodes = 0;
};

// Payoff a_lambda(p) = || sum_k lambda_k (v_k(p) - x0(p)) ||^2
inline HullData hull_data(const ConvexHull& H, const ModuleVector& x0) {
  HullData d;
  d.m = static_cast<Index>(H.vertices.size());
  d.nodes = x0.space.size();
  d.G.resize(d.m * d.m, d.nodes);
  for (Index p = 0; p < d.nodes; ++p)
    for (Index k = 0; k < d.m; ++k)
      for (Index l = 0; l < d.m; ++l) {
        VecXcd a = H.vertices[static_cast<std::size_t>(k)].values.col(p) - x0.values.col(p);
        VecXcd b = H.vertices[static_cast<std::size_t>(l)].values.col(p) - x0.values.col(p);
        d.G(k * d.m + l, p) = std::real(a.dot(b));
      }
  return d;
}

inline VecXd hull_payoff(const HullData& d, const VecXd& lam) {
  VecXd out(d.nodes);
  for (Index p = 0; p < d.nodes; ++p) {
    double acc = 0.0;
    for (Index k = 0; k < d.m; ++k)
      for (Index l = 0; l < d.m; ++l) acc += lam(k) * lam(l) * d.G(k * d.m + l, p);
    out(p) = acc;
  }
  return out;
}

inline SeparationCertificate find_separating_state(const SeparationProblem& P, double tol = 1e-10,
                                                   int max_iter = 200) {
  SeparationCertificate c;
  const BaseSpace& s = P.x0.space;
  if (const auto* sub = std::get_if<Submodule>(&P.L)) {
    DistanceResult d = submodule_distance(*sub, P.x0);
    if (d.delta <= tol) throw HypothesisError("x0 lies in the closure of L; no separating state exists");
    Index best = 0;
    d.per_node.maxCoeff(&best);
    c.state = StateSpec::pure(s, best);
    c.margin = d.per_node(best);
    c.delta = d.delta;
    c.game_value = d.delta;
    c.kind = SeparationCertificate::Kind::PureState;
    return c;
  }
  const auto& H = std::get<ConvexHull>(P.L);
  HullData hd = hull_data(H, P.x0);
  const Index m = hd.m;
  std::vector<VecXd> lams;
  for (Index k = 0; k < m; ++k) lams.push_back(VecXd::Unit(m, k));
  lams.push_back(VecXd::Constant(m, 1.0 / static_cast<double>(m)));
  double best_delta = 1e300;
  VecXd w;
  double margin = 0.0, game = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd Pm(static_cast<Index>(lams.size()), hd.nodes);
    for (std::size_t k = 0; k < lams.size(); ++k) {
      VecXd pay = hull_payoff(hd, lams[k]);
      Pm.row(static_cast<Index>(k)) = pay.transpose();
      best_delta = std::min(best_delta, pay.maxCoeff());
    }
    MatrixGameResult g = solve_matrix_game(Pm);
    w = g.column_strategy;
    game = g.value;
    Eigen::MatrixXd Q(m, m);
    for (Index k = 0; k < m; ++k)
      for (Index l = 0; l < m; ++l) Q(k, l) = hd.G.row(k * m + l).dot(w);
    SimplexQPResult q = minimize_quadratic_on_simplex(Q, VecXd::Zero(m), 0.0);
    margin = std::max(0.0, q.lower_bound);
    best_delta = std::min(best_delta, hull_payoff(hd, q.x).maxCoeff());
    c.iterations = it + 1;
    if (game - q.value <= 1e-9 * std::max(1.0, game)) break;
    lams.push_back(q.x);
  }
  if (best_delta <= tol || margin <= tol) throw HypothesisError("x0 lies in the closure of the hull; no separating state");
  // tidy tiny weights left by the simplex
  for (Index p = 0; p < w.size(); ++p)
    if (w(p) < 1e-13) w(p) = 0.0;
  c.state = StateSpec::normalized_measure(s, w);
  c.margin = margin;
  c.delta = best_delta;
  c.game_value = game;
  c.kind = c.state.support().size() == 1 ? SeparationCertificate::Kind::PureState
                                          : SeparationCertificate::Kind::MixedState;
  if (c.kind == SeparationCertificate::Kind::PureState) c.state = StateSpec::pure(s, c.state.support().front().first);
  return c;
}

// ---------------------------------------------------------------------------
// Counterexample constructions on C[0,1]

inline AlgebraElement hat_function(double t, double n, const BaseSpace& s) {
  if (!s.is_grid()) throw InputError("hat_function needs an interval grid");
  if (!(n > 0.0)) throw InputError("hat_function needs n > 0");
  if (!(t - 1.0 / n > 0.0) || !(t + 1.0 / n < 1.0)) throw InputError("hat support leaves (0,1)");
  return AlgebraElement::from_function(s, [t, n](double x) { return std::max(0.0, 1.0 - n * std::abs(x - t)); });
}

struct FlatteningReport {
  AlgebraElement combination;
  double max_value = 0.0;
  double min_member_norm = 0.0, max_member_norm = 0.0;
  Index N = 0;
  double bound = 0.0;  // 1/N
};

inline FlatteningReport flattening_combination(Index N, const BaseSpace& s) {
  if (N < 1) throw InputError("flattening_combination needs N >= 1");
  if (!s.is_grid()) throw InputError("flattening_combination needs an interval grid");
  const double n = 2.0 * static_cast<double>(N) + 2.0;
  VecXcd acc = VecXcd::Zero(s.size());
  FlatteningReport r;
  r.N = N;
  r.bound = 1.0 / static_cast<double>(N);
  r.min_member_norm = 1e300;
  for (Index j = 1; j <= N; ++j) {
    double t = static_cast<double>(j) / static_cast<double>(N + 1);
    if (s.node_at(t, 1e-9) < 0) throw InputError("grid too coarse: peak " + std::to_string(t) + " is not a node");
    AlgebraElement f = hat_function(t, n, s);
    double nrm = f.values.cwiseAbs().maxCoeff();
    r.min_member_norm = std::min(r.min_member_norm, nrm);
    r.max_member_norm = std::max(r.max_member_norm, nrm);
    acc += f.values;
  }
  acc /= static_cast<double>(N);
  r.combination = AlgebraElement(s, acc);
  r.max_value = acc.cwiseAbs().maxCoeff();
  return r;
}

// Smallest grid size on [0,1] that puts every peak of flattening_combination(N) on a node.
inline Index resolving_grid_size(Index N, Index min_nodes = 101) {
  Index step = 2 * N + 2;
  Index k = (min_nodes - 1 + step - 1) / step;
  return k * step + 1;
}

struct PureCounterexampleReport {
  double epsilon = 0.0;
  VecXd best_value;   // per node: |f(p)|^2 of the chosen combination
  VecXd mix_weight;   // per node: weight on f_{1/4,5}
  double max_value = 0.0;
  double min_hull_sup_norm = 0.0;
  double argmin_mix = 0.0;
  SeparationCertificate mixed;  // from the hull solver
};

inline PureCounterexampleReport pure_state_counterexample(double eps, const BaseSpace& s, double scan_step = 1e-3) {
  if (!(eps > 0.0 && eps <= 1.0)) throw InputError("epsilon must lie in (0,1]");
  AlgebraElement f1 = hat_function(0.25, 5.0, s);
  AlgebraElement f2 = hat_function(0.75, 5.0, s);
  PureCounterexampleReport r;
  r.epsilon = eps;
  r.best_value.resize(s.size());
  r.mix_weight.resize(s.size());
  for (Index p = 0; p < s.size(); ++p) {
    double a = s.coordinate(p) <= 0.5 ? eps : 1.0 - eps;
    cd v = a * f1(p) + (1.0 - a) * f2(p);
    r.mix_weight(p) = a;
    r.best_value(p) = std::norm(v);
  }
  r.max_value = r.best_value.maxCoeff();
  r.min_hull_sup_norm = 1e300;
  for (double a = 0.0; a <= 1.0 + 1e-12; a += scan_step) {
    double aa = std::min(a, 1.0);
    double sup = (aa * f1.values + (1.0 - aa) * f2.values).cwiseAbs().maxCoeff();
    if (sup < r.min_hull_sup_norm) r.min_hull_sup_norm = sup, r.argmin_mix = aa;
  }
  VecXcd e1 = VecXcd::Ones(1);
  ConvexHull H{{ModuleVector::scalar_times(f1, e1), ModuleVector::scalar_times(f2, e1)}};
  r.mixed = find_separating_state(make_problem(H, ModuleVector::zeros(s, 1)));
  return r;
}

struct ConvexInequalityResult {
  bool ok = true;
  Index violating_node = -1;
  double worst_matrix = 0.0;  // max over nodes of lhs - rhs (should be <= 0)
  double worst_chain = 0.0;
};

inline ConvexInequalityResult convex_inequality_check(const std::vector<ModuleVector>& ys, const VecXd& lambda,
                                                      const ModuleVector* x0 = nullptr, double tol = 1e-10) {
  if (ys.empty() || static_cast<Index>(ys.size()) != lambda.size()) throw InputError("convex_inequality_check: length mismatch");
  if ((lambda.array() < -1e-15).any() || std::abs(lambda.sum() - 1.0) > 1e-12) throw InputError("weights must be convex");
  const BaseSpace& s = ys.front().space;
  ConvexInequalityResult r;
  r.worst_matrix = -1e300;
  r.worst_chain = -1e300;
  ModuleVector zero = ModuleVector::zeros(s, ys.front().fiber_dim);
  const ModuleVector& x = x0 ? *x0 : zero;
  for (Index p = 0; p < s.size(); ++p) {
    double lhs = 0.0, rhs = 0.0;
    VecXcd mean = VecXcd::Zero(ys.front().fiber_dim);
    for (std::size_t k = 0; k < ys.size(); ++k) {
      mean += lambda(static_cast<Index>(k)) * ys[k].values.col(p);
      rhs += lambda(static_cast<Index>(k)) * ys[k].values.col(p).squaredNorm();
    }
    lhs = mean.squaredNorm();  // sum_kl lambda_k lambda_l <y_k, y_l>
    double chain_l = 0.0;
    for (std::size_t k = 0; k < ys.size(); ++k)
      chain_l += lambda(static_cast<Index>(k)) * (ys[k].values.col(p) - x.values.col(p)).squaredNorm();
    double chain_r = (x.values.col(p) - mean).squaredNorm();
    double dm = lhs - rhs, dc = chain_r - chain_l;
    r.worst_matrix = std::max(r.worst_matrix, dm);
    r.worst_chain = std::max(r.worst_chain, dc);
    double scale = std::max(1.0, rhs);
    if ((dm > tol * scale || dc > tol * std::max(1.0, chain_l)) && r.ok) {
      r.ok = false;
      r.violating_node = p;
    }
  }
  return r;
}

// <x,y> + <y,x> <= <x,x> + <y,y>, nodewise; returns the largest violation.
inline double polarization_violation(const ModuleVector& x, const ModuleVector& y) {
  AlgebraElement xy = inner_product(x, y), xx = inner_product(x, x), yy = inner_product(y, y);
  double worst = -1e300;
  for (Index p = 0; p < xy.size(); ++p) worst = std::max(worst, 2.0 * xy(p).real() - xx(p).real() - yy(p).real());
  return worst;
}

// ---------------------------------------------------------------------------
// Search harness for A-convex hulls (no claim attached): samples elements
// sum_j rho_j^* v_j rho_j over random partitions of unity and records the best
// pure-state and mixed-state margins seen for the sampled set.

struct AConvexSearchReport {
  Index samples = 0;
  double best_pure_margin = 0.0;
  Index best_pure_node = -1;
  double hull_mixed_margin = 0.0;
};

inline AConvexSearchReport a_convex_search(const ConvexHull& H, const ModuleVector& x0, Index samples, Rng& rng) {
  const BaseSpace& s = x0.space;
  const Index m = static_cast<Index>(H.vertices.size());
  VecXd worst_at = VecXd::Constant(s.size(), 1e300);
  for (Index it = 0; it < samples; ++it) {
    // random partition: rho_j = sqrt(chi_j) with chi_j >= 0 summing to 1 nodewise
    Eigen::MatrixXd chi(m, s.size());
    for (Index p = 0; p < s.size(); ++p) {
      std::exponential_distribution<double> ex(1.0);
      for (Index j = 0; j < m; ++j) chi(j, p) = ex(rng);
      chi.col(p) /= chi.col(p).sum();
    }
    MatXcd y = MatXcd::Zero(x0.fiber_dim, s.size());
    for (Index j = 0; j < m; ++j)
      for (Index p = 0; p < s.size(); ++p) y.col(p) += chi(j, p) * H.vertices[static_cast<std::size_t>(j)].values.col(p);
    for (Index p = 0; p < s.size(); ++p) worst_at(p) = std::min(worst_at(p), (y.col(p) - x0.values.col(p)).squaredNorm());
  }
  AConvexSearchReport r;
  r.samples = samples;
  r.best_pure_margin = worst_at.maxCoeff(&r.best_pure_node);
  try {
    r.hull_mixed_margin = find_separating_state(make_problem(H, x0)).margin;
  } catch (const HypothesisError&) {
    r.hull_mixed_margin = 0.0;
  }
  return r;
}

}  // namespace cstarlab
