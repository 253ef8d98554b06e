#pragma once

#include "cstarlab/cstarlab.hpp"

#include <filesystem>
#include <iostream>
#include <numeric>
#include <thread>

namespace cstarlab {

struct Scenario {
  std::string command;
  std::uint64_t seed = 0;
  Tolerances tol;
  io::json params;
};

inline const std::vector<std::string>& scenario_commands() {
  static const std::vector<std::string> c{"classify-lambda", "separate",  "localize", "check-regularity",
                                          "verify-sum",      "perturb",   "demo-counterexample", "core-check"};
  return c;
}

inline Scenario parse_scenario(const io::json& j) {
  if (!j.is_object()) throw InputError("scenario must be a JSON object");
  Scenario s;
  const io::json& c = io::require(j, "command");
  if (!c.is_string()) throw InputError("command must be a string");
  s.command = c.get<std::string>();
  const auto& cmds = scenario_commands();
  if (std::find(cmds.begin(), cmds.end(), s.command) == cmds.end()) throw InputError("unknown command '" + s.command + "'");
  s.seed = io::value_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("tolerances")) {
    const io::json& t = j.at("tolerances");
    if (!t.is_object()) throw InputError("tolerances must be an object");
    s.tol.tau = io::value_or(t, "tau", s.tol.tau);
    s.tol.algebra = io::value_or(t, "tol_algebra", s.tol.algebra);
    s.tol.density = io::value_or(t, "tol_density", s.tol.density);
  }
  s.params = j.contains("params") ? j.at("params") : io::json::object();
  if (!s.params.is_object()) throw InputError("params must be an object");
  return s;
}

// ---------------------------------------------------------------------------
// Operators from JSON

inline std::vector<MatXcd> matrices_from_json(const io::json& j) {
  std::vector<MatXcd> out;
  for (const auto& m : j) {
    if (!m.is_array() || m.empty()) throw InputError("matrix must be a nonempty list of rows");
    MatXcd A(static_cast<Index>(m.size()), static_cast<Index>(m[0].size()));
    for (std::size_t r = 0; r < m.size(); ++r) {
      if (m[r].size() != m[0].size()) throw InputError("matrix rows differ in length");
      for (std::size_t c = 0; c < m[r].size(); ++c) A(static_cast<Index>(r), static_cast<Index>(c)) = io::complex_from_json(m[r][c]);
    }
    out.push_back(A);
  }
  return out;
}

struct BuiltOperator {
  OperatorRep T;
  std::optional<LambdaClassification> classification;
};

// {"kind": "t_lambda" | "extension" | "dmin" | "dmax" | "diagonal_field", ...}
inline BuiltOperator operator_from_json(const io::json& j, const BaseSpace& s) {
  std::string kind = io::value_or<std::string>(j, "kind", "");
  Index n = io::value_or<Index>(j, "fiber_n", 201);
  if (n < 101 && kind != "diagonal_field") throw InputError("fiber_n must be at least 101");
  BuiltOperator b;
  if (kind == "t_lambda") {
    BoundaryFieldOps ops = build_boundary_field(io::lambda_from_json(io::require(j, "lambda"), s), n);
    b.T = ops.T;
    b.classification = ops.classification;
  } else if (kind == "extension") {
    cd lam = j.contains("lambda") ? io::complex_from_json(j.at("lambda")) : cd(1.0);
    b.T = build_extension(shared_deficiency_data(n), lam, s);
  } else if (kind == "dmin" || kind == "dmax") {
    DeficiencyRef d = shared_deficiency_data(n);
    auto mn = [d](Index) { return d->dmin(); };
    auto mx = [d](Index) { return d->dmax(); };
    b.T = kind == "dmin" ? make_field(s, n, mn, mx, "T_min", OpKind::DifferentialPair)
                         : make_field(s, n, mx, mn, "T_max", OpKind::DifferentialPair);
  } else if (kind == "diagonal_field") {
    std::vector<MatXcd> mats = matrices_from_json(io::require(j, "matrices"));
    if (mats.size() == 1 && s.size() > 1) mats.assign(static_cast<std::size_t>(s.size()), mats.front());
    b.T = diagonal_field(s, std::move(mats));
  } else {
    throw InputError("unknown operator kind '" + kind + "'");
  }
  return b;
}

inline BaseSpace scenario_space(const io::json& params) {
  if (!params.contains("space")) return BaseSpace::grid(0.0, 1.0, 101);
  return io::space_from_json(params.at("space"));
}

// ---------------------------------------------------------------------------
// Parallel regularity check: states are split into contiguous chunks and the
// partial verdicts are merged in chunk order, so the report does not depend on
// the thread count.

inline void merge_verdict(RegularityVerdict& into, const RegularityVerdict& part) {
  into.regular = into.regular && part.regular;
  into.selfadjoint = into.selfadjoint && part.selfadjoint;
  into.selfadjoint_regular = into.selfadjoint_regular && part.selfadjoint_regular;
  into.adjoint_selfadjoint_regular = into.adjoint_selfadjoint_regular && part.adjoint_selfadjoint_regular;
  into.witnesses.insert(into.witnesses.end(), part.witnesses.begin(), part.witnesses.end());
  into.states_checked.insert(into.states_checked.end(), part.states_checked.begin(), part.states_checked.end());
  into.min_margin = std::min(into.min_margin, part.min_margin);
}

inline RegularityVerdict parallel_local_global_check(const OperatorRep& T, const std::vector<StateSpec>& states, double tau,
                                                     unsigned threads) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(states.size())));
  if (threads == 1) return local_global_check(T, states, tau);
  std::vector<RegularityVerdict> parts(threads);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (states.size() + threads - 1) / threads;
  for (unsigned k = 0; k < threads; ++k)
    pool.emplace_back([&, k] {
      try {
        std::size_t lo = k * chunk, hi = std::min(states.size(), lo + chunk);
        if (lo < hi) parts[k] = local_global_check(T, {states.begin() + static_cast<std::ptrdiff_t>(lo), states.begin() + static_cast<std::ptrdiff_t>(hi)}, tau);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  RegularityVerdict v;
  v.tau = tau;
  for (const auto& p : parts) merge_verdict(v, p);
  return v;
}

// ---------------------------------------------------------------------------
// The Hermite momentum/position sum at truncation N

struct HermiteSumRun {
  Index N = 0;
  SumProblem problem;
  RnReport rn;
  GraphComparisonResult graph;
  SumVerdict verdict;
  std::vector<double> spectrum;  // resolved eigenvalues of D
};

inline HermiteSumRun run_hermite_sum(Index N, const std::vector<double>& mu_grid, const std::vector<int>& ns,
                                     Index samples, std::uint64_t seed, double tau, double core_tol) {
  HermiteSumRun r;
  r.N = N;
  HermiteSumCase hc = hermite_sum_case(N, BaseSpace::single_point(), samples, seed);
  HermiteTruncation h = hc.h;
  r.problem = build_sum_problem(hc.S, hc.T, hc.core, mu_grid, [h](Index) { return h.commutator; }, 20, seed, 1e8, core_tol);
  r.rn = strong_vanishing_Rn(r.problem, {hc.samples.front()}, ns);
  r.graph = graph_comparison_check(r.problem, hc.samples);
  OperatorRep D = build_sum_operator(r.problem);
  r.verdict = sum_selfadjoint_regular_check(r.problem, D, all_pure_states(hc.S->space()), tau);
  r.spectrum = resolved_spectrum(D->fiber(0), hermite_tail(N));
  return r;
}

// Largest deviation of the resolved spectrum from +-sqrt(2k), k <= kmax, relative.
inline double oscillator_deviation(const std::vector<double>& spec, int kmax) {
  std::vector<double> want = oscillator_spectrum(kmax);
  double top = want.back() + 0.1;
  std::vector<double> got;
  for (double x : spec)
    if (std::abs(x) <= top) got.push_back(x);
  if (got.size() != want.size()) return 1e300;
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
  return worst;
}

// ---------------------------------------------------------------------------
// Scenario runner

struct RunResult {
  int exit_code = 0;
  io::json report;
  std::vector<std::pair<std::string, io::Csv>> csv;
};

namespace detail {

inline io::json sum_run_json(const HermiteSumRun& r, int kmax) {
  io::json norms = io::json::array();
  for (const auto& m : r.problem.X_norms) norms.push_back({{"mu", m.mu}, {"norm", m.norm}, {"expected", 1.0 / std::abs(m.mu)}});
  io::json rows = io::json::array();
  for (const auto& x : r.rn.rows)
    rows.push_back({{"n", x.n}, {"Rn_xi", x.Rn_xi}, {"Rn_adj_xi", x.Rn_adj_xi}, {"Rn_norm", x.Rn_norm},
                    {"envelope", x.envelope}, {"factorization_residual", x.factorization_residual}});
  return {{"truncation", r.N},
          {"X_norms", norms},
          {"X_minus1", r.problem.X_minus1},
          {"C", r.problem.C},
          {"adjoint_formula_residual", r.problem.adjoint_formula_residual},
          {"commutator_identity_residual", r.problem.coret_residual},
          {"core_residual", r.problem.core_residual},
          {"Rn", {{"rows", rows}, {"vanishes", r.rn.vanishes}, {"envelope_ok", r.rn.envelope_ok}, {"last_ratio", r.rn.last_ratio}}},
          {"graph_comparison",
           {{"holds", r.graph.holds}, {"worst_commutator", r.graph.worst_commutator}, {"worst_graph", r.graph.worst_graph}}},
          {"localization_residual", r.verdict.localization_residual},
          {"domain_dims_ok", r.verdict.domain_dims_ok},
          {"verdict", io::to_json(r.verdict.local)},
          {"selfadjoint_regular", r.verdict.holds},
          {"spectrum_deviation", io::finite_or_null(oscillator_deviation(r.spectrum, kmax))}};
}

inline RunResult classify_lambda_cmd(const Scenario& sc, unsigned threads) {
  RunResult out;
  BaseSpace s = scenario_space(sc.params);
  LambdaSpec L = io::lambda_from_json(io::require(sc.params, "lambda"), s);
  LambdaClassification c = classify_lambda(L);
  SymbolicVerdict sym = classify_TLambda(c);
  out.report["classification"] = io::to_json(c);
  out.report["symbolic"] = io::to_json(sym);
  for (const char* k : {"regular", "selfadjoint", "selfadjoint_regular", "adjoint_selfadjoint_regular"})
    out.report[k] = out.report["symbolic"][k];
  if (io::value_or(sc.params, "numeric", true)) {
    BoundaryFieldOps ops = build_boundary_field(L, io::value_or<Index>(sc.params, "fiber_n", 201));
    RegularityVerdict v = parallel_local_global_check(ops.T, all_pure_states(s), sc.tol.tau, threads);
    out.report["numeric"] = io::to_json(v);
    out.report["agree"] = same_verdict(sym, v);
    out.report["witnesses"] = io::witnesses_to_json(v.witnesses);
    if (sc.params.contains("measure")) {
      const io::json& m = sc.params.at("measure");
      StateSpec mu = m.is_string() && m.get<std::string>() == "regular_uniform" ? regular_uniform_measure(c, s)
                                                                              : io::state_from_json(m, s);
      MeasureLocalizationReport r = measure_localization_analysis(ops, mu, sc.tol.tau, 100, sc.seed);
      io::json bw = io::json::array();
      for (const auto& [node, d] : r.boundary_witnesses) bw.push_back({{"node", node}, {"x", s.coordinate(node)}, {"defects", io::to_json(d)}});
      out.report["measure_localization"] = {{"defects", io::to_json(r.measure_defects)},
                                            {"selfadjoint", r.measure_defects.n_plus == 0 && r.measure_defects.n_minus == 0},
                                            {"dim", r.dim},
                                            {"boundary_witnesses", bw},
                                            {"eta_perp_residual", r.eta_perp_residual}};
    }
  } else {
    // symbolic-only: witnesses name the offending points
    io::json w = io::json::array();
    for (double x : c.boundary) w.push_back({{"state", "Pure(x=" + io::fmt15(x) + ")"}, {"check", "boundary of reg"}});
    for (const auto& i : c.ssupp_interior)
      w.push_back({{"state", "Pure(x in (" + io::fmt15(i.lo) + "," + io::fmt15(i.hi) + "))"}, {"check", "interior of ssupp"}});
    out.report["witnesses"] = w;
  }
  return out;
}

inline RunResult separate_cmd(const Scenario& sc) {
  RunResult out;
  BaseSpace s = scenario_space(sc.params);
  ModuleVector x0 = io::module_vector_from_json(io::require(sc.params, "x0"), s);
  SeparationProblem P;
  if (sc.params.contains("submodule")) {
    P = make_problem(io::submodule_from_json(sc.params.at("submodule"), s), x0);
  } else if (sc.params.contains("hull")) {
    ConvexHull H;
    for (const auto& v : io::require(sc.params.at("hull"), "vertices")) H.vertices.push_back(io::module_vector_from_json(v, s));
    if (H.vertices.empty()) throw InputError("hull needs vertices");
    P = make_problem(H, x0);
  } else {
    throw InputError("separate needs a submodule or a hull");
  }
  SeparationCertificate c = find_separating_state(P, sc.tol.algebra);
  out.report["certificate"] = io::to_json(c);
  out.report["separated"] = c.margin > 0.0;
  if (c.margin <= 0.0) out.report["witnesses"] = io::json::array({{{"check", "separation"}, {"note", "margin vanishes"}}});
  io::Csv weights({"x", "weight"});
  for (const auto& [p, w] : c.state.support()) weights.row({s.coordinate(p), w});
  out.csv.emplace_back("state_weights.csv", weights);
  return out;
}

inline RunResult localize_cmd(const Scenario& sc) {
  RunResult out;
  BaseSpace s = scenario_space(sc.params);
  BuiltOperator op = operator_from_json(io::require(sc.params, "operator"), s);
  StateSpec w = io::state_from_json(io::require(sc.params, "state"), s);
  LocalizationResult loc = localize_module(op.T, w);
  LocalOperator L = localize_operator(op.T, loc);
  DefectReport d = local_defects(L, sc.tol.tau);
  io::json blocks = io::json::array();
  for (const auto& [p, wt] : loc.blocks) blocks.push_back({{"node", p}, {"weight", wt}});
  io::json nulls = io::json::array();
  for (Index p : loc.null_nodes) nulls.push_back(p);
  out.report = {{"state", io::to_json(w)}, {"dim", loc.dim()}, {"blocks", blocks}, {"null_nodes", nulls}, {"defects", io::to_json(d)}};
  bool sa = d.n_plus == 0 && d.n_minus == 0;
  out.report["selfadjoint"] = sa;
  if (!sa)
    out.report["witnesses"] = io::json::array(
        {{{"state", w.describe()}, {"check", "selfadjoint"}, {"defects", {d.n_plus, d.n_minus}}, {"sigma_min", d.sigma_min()}}});
  // isometry ||i_w f||^2 = w(<f,f>) on random or supplied vectors
  std::vector<ModuleVector> vs;
  if (sc.params.contains("vectors"))
    for (const auto& v : sc.params.at("vectors")) vs.push_back(io::module_vector_from_json(v, s));
  Rng rng(sc.seed);
  for (Index k = 0; k < io::value_or<Index>(sc.params, "samples", 10); ++k) vs.push_back(ModuleVector::random(s, op.T->fiber_dim(), rng));
  double worst = 0.0;
  for (const auto& f : vs) {
    if (f.fiber_dim != op.T->fiber_dim()) throw InputError("vector fiber dimension differs from the operator's");
    double lhs = std::pow(loc.norm(loc.map(f)), 2);
    double rhs = 0.0;
    for (std::size_t b = 0; b < loc.blocks.size(); ++b)
      rhs += loc.blocks[b].second * std::pow(metric_norm(f.values.col(loc.blocks[b].first), loc.fiber_metric[b]), 2);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, rhs));
  }
  out.report["isometry_residual"] = worst;
  return out;
}

inline RunResult check_regularity_cmd(const Scenario& sc, unsigned threads) {
  RunResult out;
  BaseSpace s = scenario_space(sc.params);
  BuiltOperator op = operator_from_json(io::require(sc.params, "operator"), s);
  std::vector<StateSpec> states = io::states_from_json(sc.params.contains("states") ? sc.params.at("states") : io::json(), s);
  RegularityVerdict v = parallel_local_global_check(op.T, states, sc.tol.tau, threads);
  out.report = io::to_json(v);
  if (op.classification) {
    SymbolicVerdict sym = classify_TLambda(*op.classification);
    out.report["symbolic"] = io::to_json(sym);
    out.report["agree"] = same_verdict(sym, v);
  }
  if (io::value_or(sc.params, "graph_embedding", false)) {
    EmbeddingResult e = graph_embedding_adjointability(op.T, states);
    out.report["graph_embedding"] = {{"adjointable", e.adjointable}, {"residual", e.residual}, {"gap_dim", e.gap_dim},
                                     {"witnesses", io::witnesses_to_json(e.witnesses)}};
  }
  return out;
}

inline RunResult verify_sum_cmd(const Scenario& sc) {
  RunResult out;
  const io::json& p = sc.params;
  if (io::value_or<std::string>(p, "S", "momentum") != "momentum" || io::value_or<std::string>(p, "T", "position") != "position" ||
      io::value_or<std::string>(p, "core", "hermite_basis") != "hermite_basis")
    throw InputError("verify-sum supports S=momentum, T=position, core=hermite_basis");
  Index N = io::value_or<Index>(p, "truncation", 201);
  if (N < 8) throw InputError("truncation must be at least 8");
  auto mu = io::value_or(p, "mu_grid", std::vector<double>{-10.0, -3.0, -1.0, 1.0, 2.0, 10.0});
  auto ns = io::value_or(p, "ns", std::vector<int>{1, 10, 100, 1000});
  Index samples = io::value_or<Index>(p, "samples", 100);
  int kmax = io::value_or(p, "spectrum_kmax", 10);
  HermiteSumRun r = run_hermite_sum(N, mu, ns, samples, sc.seed, sc.tol.tau, sc.tol.density);
  out.report = sum_run_json(r, kmax);
  bool holds = r.verdict.holds;
  if (io::value_or(p, "doubling_check", true)) {
    HermiteSumRun r2 = run_hermite_sum(2 * N - 1, mu, ns, samples, sc.seed, sc.tol.tau, sc.tol.density);
    bool stable = r2.verdict.holds == r.verdict.holds;
    out.report["doubled"] = sum_run_json(r2, kmax);
    out.report["stable_under_doubling"] = stable;
    holds = holds && stable;
  }
  out.report["selfadjoint_regular"] = holds;
  if (!holds) {
    io::json w = io::witnesses_to_json(r.verdict.local.witnesses);
    if (w.empty()) w.push_back({{"check", "sum"}, {"note", "verdict changed under doubling or domain dimensions differ"}});
    out.report["witnesses"] = w;
  }
  io::Csv rn({"n", "Rn_xi"});
  for (const auto& x : r.rn.rows) rn.row({static_cast<double>(x.n), x.Rn_xi});
  out.csv.emplace_back("rn.csv", rn);
  io::Csv spec({"index", "eigenvalue"});
  for (std::size_t i = 0; i < r.spectrum.size(); ++i) spec.row({static_cast<double>(i), r.spectrum[i]});
  out.csv.emplace_back("spectrum.csv", spec);
  return out;
}

inline RunResult perturb_cmd(const Scenario& sc) {
  RunResult out;
  const io::json& p = sc.params;
  BaseSpace s = p.contains("space") ? io::space_from_json(p.at("space")) : BaseSpace::points(3);
  Index n = io::value_or<Index>(p, "fiber_n", 101);
  if (n < 101) throw InputError("fiber_n must be at least 101");
  cd lam = p.contains("lambda") ? io::complex_from_json(p.at("lambda")) : cd(1.0);
  OperatorRep T = build_extension(shared_deficiency_data(n), lam, s);
  const io::json& inst = io::require(p, "instance");
  std::string kind = io::value_or<std::string>(inst, "kind", "");
  Rng rng(sc.seed);
  PerturbationProblem P;
  if (kind == "boundary") {
    P = wust_boundary_instance(T, io::value_or(inst, "c", 0.5));
  } else if (kind == "random") {
    P = random_relative_instance(T, io::value_or(inst, "a", 0.5), rng);
  } else if (kind == "scaled") {
    double a = io::value_or(inst, "a", 0.5);
    P = {T, make_field(s, n, [T, a](Index q) { return scaled(T->fiber(q), a); }, nullptr, "aT"), a, 0.0};
  } else {
    throw InputError("instance kind must be boundary, random or scaled");
  }
  std::vector<StateSpec> states = io::states_from_json(p.contains("states") ? p.at("states") : io::json(), s);
  auto checks = io::value_or(p, "checks", std::vector<std::string>{"kato_rellich", "wust"});
  out.report["instance"] = {{"kind", kind}, {"a", P.a}, {"b", P.b}};
  io::json witnesses = io::json::array();
  int refused = 0;
  for (const auto& name : checks) {
    if (name == "kato_rellich") {
      try {
        KatoRellichVerdict v = kato_rellich_check(P, states, 40, sc.tol.tau);
        io::json scan = io::json::array();
        for (const auto& e : v.scan) scan.push_back({{"mu", e.mu}, {"norm", e.norm}});
        out.report["kato_rellich"] = {{"applicable", true}, {"holds", v.holds}, {"mu", v.mu}, {"achieved_norm", v.achieved_norm},
                                      {"scan", scan}, {"local", io::to_json(v.local)}};
        if (!v.holds) {
          io::json w = io::witnesses_to_json(v.local.witnesses);
          if (w.empty()) w.push_back({{"check", "kato_rellich"}, {"note", "no mu with ||V(T-+i mu)^-1|| < 1 found"}});
          witnesses.insert(witnesses.end(), w.begin(), w.end());
        }
      } catch (const HypothesisError& e) {
        ++refused;
        out.report["kato_rellich"] = {{"applicable", false}, {"reason", e.what()}};
      }
    } else if (name == "wust") {
      try {
        WustVerdict v = wust_check(P, states, io::value_or<Index>(p, "samples", 100), sc.seed, sc.tol.tau);
        out.report["wust"] = {{"applicable", true},         {"holds", v.holds},         {"hypothesis_holds", v.hypothesis_holds},
                              {"b", v.b},                   {"worst_margin", v.worst_margin}, {"worst_node", v.worst_node},
                              {"localized_inequality_worst", v.localized_inequality_worst}, {"samples", v.samples},
                              {"local", io::to_json(v.local)}};
        if (!v.holds) {
          io::json w = io::witnesses_to_json(v.local.witnesses);
          if (w.empty()) w.push_back({{"check", "wust"}, {"node", v.worst_node}, {"note", "localized inequality violated"}});
          witnesses.insert(witnesses.end(), w.begin(), w.end());
        }
      } catch (const WustHypothesisError& e) {
        ++refused;
        out.report["wust"] = {{"applicable", false}, {"reason", e.what()}, {"node", e.node}, {"margin", e.margin}};
      } catch (const HypothesisError& e) {
        ++refused;
        out.report["wust"] = {{"applicable", false}, {"reason", e.what()}};
      }
    } else {
      throw InputError("unknown check '" + name + "'");
    }
  }
  if (!witnesses.empty()) out.report["witnesses"] = witnesses;
  if (!checks.empty() && refused == static_cast<int>(checks.size())) out.exit_code = 2;
  return out;
}

inline RunResult demo_counterexample_cmd(const Scenario& sc) {
  RunResult out;
  const io::json& p = sc.params;
  std::string figure = io::value_or<std::string>(p, "figure", "all");
  bool all = figure == "all";
  if (!all && figure != "hat" && figure != "flattening" && figure != "pure_state")
    throw InputError("figure must be hat, flattening, pure_state or all");
  if (all || figure == "hat") {
    double t = io::value_or(p, "t", 0.5), n = io::value_or(p, "n", 4.0);
    BaseSpace s = BaseSpace::grid(0.0, 1.0, io::value_or<Index>(p, "grid_n", 1001));
    AlgebraElement f = hat_function(t, n, s);
    out.report["hat"] = {{"t", t}, {"n", n}, {"max", f.values.cwiseAbs().maxCoeff()}};
    out.csv.emplace_back("hat.csv", io::series_csv(f));
  }
  if (all || figure == "flattening") {
    Index N = io::value_or<Index>(p, "N", 10);
    BaseSpace s = BaseSpace::grid(0.0, 1.0, resolving_grid_size(N, io::value_or<Index>(p, "min_nodes", 1001)));
    FlatteningReport r = flattening_combination(N, s);
    out.report["flattening"] = {{"N", N},           {"max", r.max_value}, {"bound", r.bound},
                                {"min_member_norm", r.min_member_norm}, {"max_member_norm", r.max_member_norm},
                                {"grid_n", s.size()}};
    out.csv.emplace_back("flattening.csv", io::series_csv(r.combination));
  }
  if (all || figure == "pure_state") {
    double eps = io::value_or(p, "eps", 0.1);
    BaseSpace s = BaseSpace::grid(0.0, 1.0, io::value_or<Index>(p, "grid_n", 1001));
    PureCounterexampleReport r = pure_state_counterexample(eps, s);
    out.report["pure_state"] = {{"eps", eps}, {"max_value", r.max_value}, {"min_hull_sup_norm", r.min_hull_sup_norm},
                                {"argmin_mix", r.argmin_mix}, {"mixed_certificate", io::to_json(r.mixed)}};
    io::Csv c({"x", "value"});
    for (Index q = 0; q < s.size(); ++q) c.row({s.coordinate(q), r.best_value(q)});
    out.csv.emplace_back("pure_state.csv", c);
  }
  return out;
}

inline RunResult core_check_cmd(const Scenario& sc) {
  RunResult out;
  BaseSpace s = scenario_space(sc.params);
  BuiltOperator op = operator_from_json(io::require(sc.params, "operator"), s);
  const io::json& cj = io::require(sc.params, "core");
  Submodule core = cj.contains("trigonometric")
                       ? trigonometric_core(s, op.T->fiber_dim(), cj.at("trigonometric").get<int>())
                       : io::submodule_from_json(cj, s);
  std::vector<StateSpec> states = io::states_from_json(sc.params.contains("states") ? sc.params.at("states") : io::json(), s);
  // "smooth_targets": k tests exp(j sin 2 pi t) and exp(i j cos 2 pi t), j = 1..k,
  // projected to the fiber domain, instead of the whole truncated domain.
  TargetBuilder targets = nullptr;
  Index modes = io::value_or<Index>(sc.params, "smooth_targets", 0);
  if (modes > 0)
    targets = [modes](Index, const FiberOperator& F) {
      VecXd t = unit_grid(F.dim());
      MatXcd T(F.dim(), 2 * modes);
      for (Index j = 1; j <= modes; ++j)
        for (Index i = 0; i < F.dim(); ++i) {
          double x = 2.0 * std::numbers::pi * t(i);
          T(i, 2 * j - 2) = std::exp(static_cast<double>(j) * std::sin(x));
          T(i, 2 * j - 1) = std::polar(1.0, static_cast<double>(j) * std::cos(x));
        }
      for (Index k = 0; k < T.cols(); ++k) T.col(k) = project_to_domain(F, T.col(k));
      return T;
    };
  std::vector<CoreReport> rs = check_core(op.T, core, states, sc.tol.density, targets);
  io::json arr = io::json::array(), w = io::json::array();
  bool all_core = true;
  double worst = 0.0;
  for (const auto& r : rs) {
    arr.push_back(io::to_json(r));
    worst = std::max(worst, r.residual);
    if (!r.is_core) {
      all_core = false;
      w.push_back({{"state", r.state.describe()}, {"check", "core"}, {"residual", r.residual}});
    }
  }
  out.report = {{"is_core", all_core}, {"worst_residual", worst}, {"tol", sc.tol.density}, {"states", arr}, {"smooth_targets", modes}};
  if (!all_core) out.report["witnesses"] = w;
  return out;
}

}  // namespace detail

inline RunResult run_scenario(const Scenario& sc, unsigned threads = 1) {
  RunResult r;
  if (sc.command == "classify-lambda") r = detail::classify_lambda_cmd(sc, threads);
  else if (sc.command == "separate") r = detail::separate_cmd(sc);
  else if (sc.command == "localize") r = detail::localize_cmd(sc);
  else if (sc.command == "check-regularity") r = detail::check_regularity_cmd(sc, threads);
  else if (sc.command == "verify-sum") r = detail::verify_sum_cmd(sc);
  else if (sc.command == "perturb") r = detail::perturb_cmd(sc);
  else if (sc.command == "demo-counterexample") r = detail::demo_counterexample_cmd(sc);
  else r = detail::core_check_cmd(sc);
  r.report["command"] = sc.command;
  r.report["seed"] = sc.seed;
  r.report["status"] = r.exit_code == 0 ? "ok" : "hypothesis_failure";
  return r;
}

// Reads, runs and writes report.json plus CSV series into out_dir. Returns the exit code.
inline int run_scenario_file(const std::string& path, const std::string& out_dir, unsigned threads,
                             std::optional<std::uint64_t> seed_override, std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  io::json report;
  int code = 0;
  RunResult r;
  try {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open scenario " + path);
    io::json j;
    try {
      j = io::json::parse(f);
    } catch (const io::json::parse_error& e) {
      throw InputError(std::string("malformed JSON: ") + e.what());
    }
    Scenario sc = parse_scenario(j);
    if (seed_override) sc.seed = *seed_override;
    r = run_scenario(sc, threads);
    report = r.report;
    code = r.exit_code;
  } catch (const InputError& e) {
    report = {{"status", "input_error"}, {"error", e.what()}};
    code = 3;
  } catch (const io::json::exception& e) {
    report = {{"status", "input_error"}, {"error", e.what()}};
    code = 3;
  } catch (const HypothesisError& e) {
    report = {{"status", "hypothesis_failure"}, {"error", e.what()}};
    code = 2;
  } catch (const NumericalError& e) {
    report = {{"status", "numerical_error"}, {"error", e.what()}};
    code = 1;
  }
  if (code != 0 && report.contains("error")) err << "error: " << report["error"].get<std::string>() << "\n";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    err << "error: cannot create " << out_dir << "\n";
    return 3;
  }
  std::ofstream o(fs::path(out_dir) / "report.json", std::ios::binary);
  o << report.dump(2) << "\n";
  for (const auto& [name, csv] : r.csv) csv.write((fs::path(out_dir) / name).string());
  return code;
}

}  // namespace cstarlab
