#pragma once

#include "cstarlab/localization.hpp"

namespace cstarlab {

struct RangeDenseResult {
  bool plus = false;   // T + i mu
  bool minus = false;  // T - i mu
  double sigma_plus = 0.0, sigma_minus = 0.0;
  double threshold = 0.0;
};

// ran(T +- i mu) is dense iff T* -+ i mu is injective on dom(T*).
inline RangeDenseResult check_range_dense(const FiberOperator& F, double mu, double tau = -1.0) {
  if (mu == 0.0) throw InputError("check_range_dense needs mu != 0");
  const Index n = F.dim();
  if (tau < 0.0) tau = default_tau(n);
  SpMat Bs = kernel_basis(adjoint_constraints(F), F.metric);
  SpMat Wh = sparse_diag(VecXd(F.metric.cwiseSqrt()));
  RangeDenseResult r;
  double smax = 0.0;
  double s[2];
  for (int k = 0; k < 2; ++k) {
    // k = 0: T + i mu needs T* - i mu injective
    cd shift = k == 0 ? cd(0.0, mu) : cd(0.0, -mu);
    SpMat A = Wh * (F.formal_adjoint - shift * sparse_identity(n)) * Bs;
    A.makeCompressed();
    SingularInfo info = smallest_singular(A, 1);
    s[k] = info.sigma.size() ? info.sigma(0) : 0.0;
    smax = std::max(smax, info.sigma_max);
  }
  r.threshold = tau * smax;
  r.sigma_plus = s[0];
  r.sigma_minus = s[1];
  r.plus = s[0] > r.threshold;
  r.minus = s[1] > r.threshold;
  return r;
}

struct Witness {
  std::string state;
  Index node = -1;
  std::string check;  // which localized property failed
  int n_plus = -1, n_minus = -1;
  double sigma_min = 0.0;
  double margin = 0.0;
  std::string note;
};

struct RegularityVerdict {
  bool regular = true;
  bool selfadjoint = true;
  bool selfadjoint_regular = true;
  bool adjoint_selfadjoint_regular = true;
  std::vector<Witness> witnesses;
  std::vector<std::string> states_checked;
  double tau = 0.0;
  double min_margin = 1e300;  // decades between decisive singular values and threshold
};

struct BlockCheck {
  bool regular_ok = true, selfadjoint_ok = true, sa_reg = true, adj_sa_reg = true;
  double domain_gap = 0.0;
  DefectReport defects, adj_defects;
  bool symmetric = true, adj_symmetric = true;
};

inline BlockCheck check_block(const FiberOperator& F, const FiberOperator& Fs, double tau) {
  BlockCheck b;
  FiberOperator Fadj = adjoint(F);
  b.domain_gap = operator_distance(Fs, Fadj);
  b.regular_ok = b.domain_gap <= 1e-6;
  b.selfadjoint_ok = operator_distance(F, Fs) <= 1e-6;
  b.symmetric = is_symmetric(F);
  if (b.symmetric) {
    b.defects = defect_indices(F, tau);
    b.sa_reg = b.defects.n_plus == 0 && b.defects.n_minus == 0;
  } else {
    b.sa_reg = false;
  }
  b.adj_symmetric = is_symmetric(Fs);
  if (b.adj_symmetric) {
    b.adj_defects = defect_indices(Fs, tau);
    b.adj_sa_reg = b.adj_defects.n_plus == 0 && b.adj_defects.n_minus == 0;
  } else {
    b.adj_sa_reg = false;
  }
  return b;
}

// Localizations at the sampled states decide the module-level properties:
// regular iff (T*)^w = (T^w)*, selfadjoint iff T^w = (T*)^w, and selfadjoint
// regular iff every T^w is selfadjoint.
inline RegularityVerdict local_global_check(const OperatorRep& T, const std::vector<StateSpec>& states, double tau = -1.0) {
  RegularityVerdict v;
  v.tau = tau;
  OperatorRep Ts = adjoint_operator(T);
  for (const auto& w : states) {
    LocalizationResult loc = localize_module(T, w);
    LocalOperator L = localize_operator(T, loc);
    LocalOperator La = localize_operator(Ts, loc);
    v.states_checked.push_back(w.describe());
    for (std::size_t b = 0; b < L.blocks.size(); ++b) {
      Index node = loc.blocks[b].first;
      BlockCheck c = check_block(L.blocks[b], La.blocks[b], tau);
      auto wit = [&](const std::string& what, const DefectReport* d, bool sym) {
        Witness x;
        x.state = w.describe();
        x.node = node;
        x.check = what;
        if (d && sym) {
          x.n_plus = d->n_plus;
          x.n_minus = d->n_minus;
          x.sigma_min = d->sigma_min();
          x.margin = d->margin();
        }
        if (!sym) x.note = "localization is not symmetric";
        v.witnesses.push_back(x);
      };
      if (c.symmetric) v.min_margin = std::min(v.min_margin, c.defects.margin());
      if (c.adj_symmetric) v.min_margin = std::min(v.min_margin, c.adj_defects.margin());
      if (!c.regular_ok) {
        v.regular = false;
        Witness x;
        x.state = w.describe();
        x.node = node;
        x.check = "regular";
        x.note = "(T*)^w differs from (T^w)* by " + std::to_string(c.domain_gap);
        v.witnesses.push_back(x);
      }
      if (!c.selfadjoint_ok) {
        v.selfadjoint = false;
        wit("selfadjoint", &c.defects, c.symmetric);
      }
      if (!c.sa_reg) {
        v.selfadjoint_regular = false;
        wit("selfadjoint_regular", &c.defects, c.symmetric);
      }
      if (!c.adj_sa_reg) {
        v.adjoint_selfadjoint_regular = false;
        wit("adjoint_selfadjoint_regular", &c.adj_defects, c.adj_symmetric);
      }
    }
  }
  return v;
}

inline bool same_verdict(const SymbolicVerdict& s, const RegularityVerdict& n) {
  return s.regular == n.regular && s.selfadjoint == n.selfadjoint && s.selfadjoint_regular == n.selfadjoint_regular &&
         s.adjoint_selfadjoint_regular == n.adjoint_selfadjoint_regular;
}

// ---------------------------------------------------------------------------
// Faithful measure localization of T_Lambda

// Uniform on the nodes where Lambda is continuous, zero on the rest.
inline StateSpec regular_uniform_measure(const LambdaClassification& c, const BaseSpace& s) {
  VecXd w = VecXd::Zero(s.size());
  for (Index p = 0; p < s.size(); ++p)
    if (c.node_case[static_cast<std::size_t>(p)] == PointCase::Regular) w(p) = 1.0;
  if (w.sum() == 0.0) throw HypothesisError("Lambda has no regular node; no faithful measure exists");
  return StateSpec::normalized_measure(s, w);
}

struct MeasureLocalizationReport {
  DefectReport measure_defects;
  std::vector<std::pair<Index, DefectReport>> boundary_witnesses;  // pure states on the boundary of reg
  double eta_perp_residual = 0.0;        // boundary-form pairing, max over samples
  double eta_perp_graph_residual = 0.0;  // raw graph inner product (discretization error)
  Index samples = 0;
  Index dim = 0;
};

inline MeasureLocalizationReport measure_localization_analysis(const BoundaryFieldOps& ops, const StateSpec& mu,
                                                               double tau = -1.0, Index samples = 100,
                                                               std::uint64_t seed = 7) {
  const LambdaClassification& c = ops.classification;
  const BaseSpace& s = ops.T->space();
  if (mu.is_pure()) throw InputError("measure_localization_analysis needs a measure state");
  if (mu.space() != s) throw InputError("measure lives on another space");
  if (!c.ssupp_interior.empty()) throw HypothesisError("reg(Lambda) is not dense; the measure cannot be faithful");
  for (Index p = 0; p < s.size(); ++p) {
    PointCase pc = c.node_case[static_cast<std::size_t>(p)];
    double wp = mu.weights()(p);
    if (pc != PointCase::Regular && wp > 0.0)
      throw HypothesisError("the boundary of reg(Lambda) carries positive weight at node " + std::to_string(p));
    if (pc == PointCase::Regular && wp <= 0.0)
      throw HypothesisError("supp(mu) misses the regular node " + std::to_string(p));
  }
  MeasureLocalizationReport r;
  LocalizationResult loc = localize_module(ops.T, mu);
  LocalOperator L = localize_operator(ops.T, loc);
  r.dim = loc.dim();
  r.measure_defects = local_defects(L, tau);
  for (Index p = 0; p < s.size(); ++p)
    if (c.node_case[static_cast<std::size_t>(p)] != PointCase::Regular)
      r.boundary_witnesses.emplace_back(p, defect_indices(ops.T->fiber(p), tau));
  // <f, eta_perp_Lambda>_{T,mu} for random f in the constructed domain
  Rng rng(seed);
  const DeficiencyData& d = *ops.data;
  r.samples = samples;
  for (Index k = 0; k < samples; ++k) {
    cd acc_b = 0.0, acc_g = 0.0;
    double norm2 = 0.0;
    for (std::size_t b = 0; b < loc.blocks.size(); ++b) {
      auto [node, wt] = loc.blocks[b];
      cd lam = c.node_value[static_cast<std::size_t>(node)];
      const FiberOperator& F = L.blocks[b];
      VecXcd f = random_domain_vector(F, rng);
      VecXcd ep = d.eta_perp(lam);
      acc_b += wt * (std::conj(d.alpha_plus(f) - lam * d.alpha_minus(f))) / std::sqrt(2.0);
      acc_g += wt * graph_inner(F, f, ep);
      norm2 += wt * std::real(graph_inner(F, f, f));
    }
    double nf = std::sqrt(norm2);
    r.eta_perp_residual = std::max(r.eta_perp_residual, std::abs(acc_b) / nf);
    r.eta_perp_graph_residual = std::max(r.eta_perp_graph_residual, std::abs(acc_g) / nf);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Graph embedding dom(T) -> E

struct EmbeddingResult {
  bool adjointable = true;
  double residual = 0.0;  // identity <i_T x, y>_E = <x, C y>_T
  Index gap_dim = 0;      // dim dom((T^w)*) - dim dom((T*)^w), summed over states
  std::vector<Witness> witnesses;
};

inline EmbeddingResult graph_embedding_adjointability(const OperatorRep& T, const std::vector<StateSpec>& states,
                                                      double tol = 1e-8, Index samples = 5, std::uint64_t seed = 11) {
  EmbeddingResult out;
  OperatorRep Ts = adjoint_operator(T);
  Rng rng(seed);
  for (const auto& w : states) {
    LocalizationResult loc = localize_module(T, w);
    LocalOperator L = localize_operator(T, loc);
    LocalOperator La = localize_operator(Ts, loc);
    for (std::size_t b = 0; b < L.blocks.size(); ++b) {
      const FiberOperator& F = L.blocks[b];
      MatXcd B(domain_basis(F));
      VecXcd h = F.metric.cast<cd>();
      MatXcd A = F.metric.cwiseSqrt().cast<cd>().asDiagonal() * (F.action * B);
      MatXcd G = MatXcd::Identity(B.cols(), B.cols()) + A.adjoint() * A;
      Eigen::LDLT<MatXcd> ldlt(G);
      for (Index k = 0; k < samples; ++k) {
        VecXcd x = random_vector(B.cols(), rng);
        VecXcd y = random_vector(F.dim(), rng);
        VecXcd Cy = ldlt.solve(B.adjoint() * h.asDiagonal() * y);
        cd lhs = metric_inner(B * x, y, F.metric);
        cd rhs = x.dot(G * Cy);
        out.residual = std::max(out.residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      }
      Index gap = domain_dim(adjoint(F)) - domain_dim(La.blocks[b]);
      if (gap != 0) {
        out.gap_dim += std::abs(gap);
        Witness x;
        x.state = w.describe();
        x.node = loc.blocks[b].first;
        x.check = "graph_embedding";
        x.note = "I + T*T misses " + std::to_string(gap) + " dimension(s) of range";
        out.witnesses.push_back(x);
      }
    }
  }
  out.adjointable = out.residual <= tol && out.gap_dim == 0;
  return out;
}

// ---------------------------------------------------------------------------
// Finite X

struct FiniteCheckResult {
  bool regular = true;
  double max_adjoint_residual = 0.0;
  Index states = 0;
  std::vector<Witness> witnesses;
};

// Random symmetric fields (or adjoint pairs) over a finite point set: every
// localization is a matrix, hence everywhere defined and bounded.
inline FiniteCheckResult finitely_generated_commutative_check(const BaseSpace& s, Index fiber_dim, bool adjoint_pair,
                                                              std::uint64_t seed = 3) {
  if (s.is_grid()) throw InputError("finitely generated check needs a finite point set");
  Rng rng(seed);
  std::vector<MatXcd> mats;
  for (Index p = 0; p < s.size(); ++p) {
    MatXcd A(fiber_dim, fiber_dim);
    for (Index j = 0; j < fiber_dim; ++j) A.col(j) = random_vector(fiber_dim, rng);
    mats.push_back(adjoint_pair ? A : MatXcd(hermitian_part(A)));
  }
  OperatorRep T = diagonal_field(s, mats);
  FiniteCheckResult r;
  for (Index p = 0; p < s.size(); ++p) {
    ++r.states;
    FiberOperator F = T->fiber(p);
    FiberOperator expected = bounded_fiber(MatXcd(mats[static_cast<std::size_t>(p)].adjoint()), VecXd(), "A*");
    double res = operator_distance(T->adjoint_fiber(p), expected);
    r.max_adjoint_residual = std::max(r.max_adjoint_residual, res);
    bool ok = res <= 1e-12;
    if (!adjoint_pair) {
      DefectReport d = defect_indices(F);
      ok = ok && d.n_plus == 0 && d.n_minus == 0;
    } else {
      DefectReport d = defect_indices(hat(F, T->adjoint_fiber(p)));
      ok = ok && d.n_plus == 0 && d.n_minus == 0;
    }
    if (!ok) {
      r.regular = false;
      r.witnesses.push_back({StateSpec::pure(s, p).describe(), p, "finite", -1, -1, 0.0, 0.0, "defect found"});
    }
  }
  return r;
}

}  // namespace cstarlab
