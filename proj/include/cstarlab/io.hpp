#pragma once

#include "cstarlab/perturbation_sums.hpp"
#include "cstarlab/separation.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace cstarlab::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scalars

inline json to_json(cd z) { return json::array({z.real(), z.imag()}); }

inline double get_number(const json& j, const char* what) {
  if (!j.is_number()) throw InputError(std::string(what) + ": number expected");
  return j.get<double>();
}

inline cd complex_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object() && j.contains("phase")) return std::polar(1.0, get_number(j["phase"], "phase"));
  throw InputError("complex number must be [re, im], a real number or {\"phase\": theta}");
}

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("field '") + key + "' has the wrong type");
  }
}

inline json vec_to_json(const VecXcd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
  return a;
}

inline VecXcd vec_from_json(const json& j) {
  if (!j.is_array()) throw InputError("vector must be an array");
  VecXcd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = complex_from_json(j[i]);
  return v;
}

inline json real_vec_to_json(const VecXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// ---------------------------------------------------------------------------
// Spaces, algebra elements, states, module vectors

inline json to_json(const BaseSpace& s) {
  if (s.is_grid()) return {{"kind", "grid"}, {"a", s.as_grid().a}, {"b", s.as_grid().b}, {"n", s.as_grid().n}};
  return {{"kind", "points"}, {"labels", s.as_points().labels}};
}

inline BaseSpace space_from_json(const json& j) {
  std::string kind = value_or<std::string>(j, "kind", "grid");
  if (kind == "grid")
    return BaseSpace::grid(value_or(j, "a", 0.0), value_or(j, "b", 1.0), value_or<Index>(j, "n", 101));
  if (kind == "points") {
    if (j.contains("labels")) return BaseSpace::points(j.at("labels").get<std::vector<std::string>>());
    return BaseSpace::points(value_or<Index>(j, "count", 1));
  }
  throw InputError("unknown space kind '" + kind + "'");
}

inline json to_json(const AlgebraElement& a) { return {{"space", to_json(a.space)}, {"values", vec_to_json(a.values)}}; }

// {"values": [...]}, {"constant": z}, {"poly": [c0, c1, ...]} or {"hat": {"t": t, "n": n}}
inline AlgebraElement algebra_from_json(const json& j, const BaseSpace& s) {
  if (j.contains("values")) return {s, vec_from_json(j.at("values"))};
  if (j.contains("constant")) return AlgebraElement::constant(s, complex_from_json(j.at("constant")));
  if (j.contains("poly")) {
    auto cs = j.at("poly").get<std::vector<double>>();
    return AlgebraElement::from_function(s, [cs](double x) {
      double acc = 0.0;
      for (std::size_t k = cs.size(); k-- > 0;) acc = acc * x + cs[k];
      return acc;
    });
  }
  if (j.contains("hat")) {
    const json& h = j.at("hat");
    return hat_function(get_number(require(h, "t"), "t"), get_number(require(h, "n"), "n"), s);
  }
  throw InputError("algebra element needs one of values/constant/poly/hat");
}

inline json to_json(const StateSpec& w) {
  if (w.is_pure()) return {{"pure", w.node()}};
  return {{"measure", real_vec_to_json(w.weights())}};
}

// {"pure": node}, {"pure_at": x}, {"measure": [w...]}, {"weights": [w...]} (normalized),
// {"uniform": true}, {"lebesgue": true}
inline StateSpec state_from_json(const json& j, const BaseSpace& s) {
  if (j.contains("pure")) return StateSpec::pure(s, j.at("pure").get<Index>());
  if (j.contains("pure_at")) {
    Index p = s.node_at(get_number(j.at("pure_at"), "pure_at"), 1e-9);
    if (p < 0) throw InputError("pure_at: point is not a grid node");
    return StateSpec::pure(s, p);
  }
  auto weights = [&](const json& a) {
    auto w = a.get<std::vector<double>>();
    return VecXd(Eigen::Map<VecXd>(w.data(), static_cast<Index>(w.size())));
  };
  if (j.contains("measure")) return StateSpec::measure(s, weights(j.at("measure")));
  if (j.contains("weights")) return StateSpec::normalized_measure(s, weights(j.at("weights")));
  if (value_or(j, "uniform", false)) return StateSpec::uniform(s);
  if (value_or(j, "lebesgue", false)) return StateSpec::lebesgue(s);
  throw InputError("state needs one of pure/pure_at/measure/weights/uniform/lebesgue");
}

inline std::vector<StateSpec> states_from_json(const json& j, const BaseSpace& s) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "all_pure")) return all_pure_states(s);
  if (!j.is_array()) throw InputError("states must be \"all_pure\" or a list");
  std::vector<StateSpec> out;
  for (const auto& e : j) out.push_back(state_from_json(e, s));
  if (out.empty()) throw InputError("empty state list");
  return out;
}

inline json to_json(const ModuleVector& x) {
  json vals = json::array();
  for (Index p = 0; p < x.values.cols(); ++p) vals.push_back(vec_to_json(x.values.col(p)));
  return {{"space", to_json(x.space)}, {"fiber_dim", x.fiber_dim}, {"values", vals}};
}

// Explicit {"fiber_dim", "values"} or {"scalar": algebra element, "vector": fiber vector}.
inline ModuleVector module_vector_from_json(const json& j, const BaseSpace& s) {
  if (j.contains("values")) {
    const json& vals = j.at("values");
    Index d = value_or<Index>(j, "fiber_dim", -1);
    if (!vals.is_array() || static_cast<Index>(vals.size()) != s.size()) throw InputError("module vector: one entry per node");
    MatXcd m;
    for (std::size_t p = 0; p < vals.size(); ++p) {
      VecXcd v = vec_from_json(vals[p]);
      if (p == 0) {
        if (d < 0) d = v.size();
        m.resize(d, s.size());
      }
      if (v.size() != d) throw InputError("module vector: fiber vector length differs from fiber_dim");
      m.col(static_cast<Index>(p)) = v;
    }
    return {s, m};
  }
  if (j.contains("scalar")) {
    AlgebraElement a = algebra_from_json(j.at("scalar"), s);
    VecXcd v = j.contains("vector") ? vec_from_json(j.at("vector")) : VecXcd::Ones(1);
    return ModuleVector::scalar_times(a, v);
  }
  throw InputError("module vector needs values or scalar");
}

inline Submodule submodule_from_json(const json& j, const BaseSpace& s) {
  const json& g = require(j, "generators");
  if (!g.is_array() || g.empty()) throw InputError("submodule needs a nonempty generator list");
  std::vector<ModuleVector> gens;
  for (const auto& e : g) gens.push_back(module_vector_from_json(e, s));
  return Submodule(std::move(gens));
}

// ---------------------------------------------------------------------------
// Lambda specs

inline PhaseExpr phase_from_json(const json& j) {
  const json& k = require(j, "kind");
  if (!k.is_string()) throw InputError("phase kind must be a string");
  std::string kind = k.get<std::string>();
  if (kind == "constant") return PhaseExpr::constant(get_number(require(j, "theta"), "theta"));
  if (kind == "poly") return PhaseExpr::poly(require(j, "coeffs").get<std::vector<double>>());
  if (kind == "reciprocal")
    return PhaseExpr::reciprocal(get_number(require(j, "c"), "c"), value_or(j, "x0", 0.0), value_or(j, "d", 0.0));
  if (kind == "samples") {
    std::vector<std::pair<double, double>> s;
    for (const auto& e : require(j, "samples")) s.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
    return PhaseExpr::sampled(std::move(s));
  }
  throw InputError("unknown phase kind '" + kind + "'");
}

inline std::optional<LimitData> limit_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string() && j.get<std::string>() == "none") return LimitData::none();
  return LimitData::of(complex_from_json(j));
}

// {"canonical": name} or {"breakpoints": [...], "regions": [...], "points": [...]}
inline LambdaSpec lambda_from_json(const json& j, const BaseSpace& s) {
  if (j.contains("canonical")) {
    std::string name = j.at("canonical").get<std::string>();
    if (name == "continuous") return canonical::continuous_exp(s);
    if (name == "no_limit_at_zero") return canonical::no_limit_at_zero(s);
    if (name == "removable_jump_at_zero") return canonical::removable_jump_at_zero(s);
    if (name == "singular_middle") return canonical::singular_middle(s);
    throw InputError("unknown canonical Lambda '" + name + "'");
  }
  std::vector<double> bps = value_or(j, "breakpoints", std::vector<double>{});
  std::vector<RegionSpec> regions;
  for (const auto& r : require(j, "regions")) {
    std::string mode = value_or<std::string>(r, "mode", "continuous");
    if (mode == "singular")
      regions.push_back(RegionSpec::singular());
    else if (mode == "continuous")
      regions.push_back(RegionSpec::continuous(phase_from_json(require(r, "expr"))));
    else
      throw InputError("region mode must be continuous or singular");
  }
  std::vector<PointDecl> decls;
  if (j.contains("points"))
    for (const auto& p : j.at("points")) {
      PointDecl d;
      d.x = get_number(require(p, "x"), "x");
      if (p.contains("value") && !p.at("value").is_null()) d.value = complex_from_json(p.at("value"));
      if (p.contains("left")) d.left = limit_from_json(p.at("left"));
      if (p.contains("right")) d.right = limit_from_json(p.at("right"));
      decls.push_back(d);
    }
  return LambdaSpec::build(s, std::move(bps), std::move(regions), std::move(decls));
}

inline json intervals_to_json(const std::vector<Interval>& v) {
  json a = json::array();
  for (const auto& i : v) a.push_back({{"lo", i.lo}, {"hi", i.hi}, {"lo_closed", i.lo_closed}, {"hi_closed", i.hi_closed}});
  return a;
}

inline json to_json(const LambdaClassification& c) {
  json lt = json::array();
  for (const auto& z : c.lambda_tilde) lt.push_back(to_json(z));
  return {{"reg", intervals_to_json(c.reg)},
          {"ssupp_interior", intervals_to_json(c.ssupp_interior)},
          {"ssupp_boundary", c.boundary},
          {"reg_inf", c.reg_inf},
          {"ssupp_r", c.ssupp_r},
          {"lambda_tilde", lt}};
}

inline json to_json(const SymbolicVerdict& v) {
  return {{"regular", v.regular},
          {"selfadjoint", v.selfadjoint},
          {"selfadjoint_regular", v.selfadjoint_regular},
          {"adjoint_selfadjoint_regular", v.adjoint_selfadjoint_regular}};
}

// ---------------------------------------------------------------------------
// Reports

inline json finite_or_null(double x) { return std::isfinite(x) && std::abs(x) < 1e299 ? json(x) : json(nullptr); }

inline json to_json(const DefectReport& d) {
  return {{"defects", {d.n_plus, d.n_minus}},
          {"sigma_min", finite_or_null(d.sigma_min())},
          {"threshold", d.threshold},
          {"tau", d.tau},
          {"margin_decades", finite_or_null(d.margin())},
          {"dim", d.dim}};
}

inline json to_json(const Witness& w) {
  json j = {{"state", w.state}, {"node", w.node}, {"check", w.check}};
  if (w.n_plus >= 0) j["defects"] = {w.n_plus, w.n_minus};
  j["sigma_min"] = finite_or_null(w.sigma_min);
  j["margin_decades"] = finite_or_null(w.margin);
  if (!w.note.empty()) j["note"] = w.note;
  return j;
}

inline json witnesses_to_json(const std::vector<Witness>& ws) {
  json a = json::array();
  for (const auto& w : ws) a.push_back(to_json(w));
  return a;
}

inline json to_json(const RegularityVerdict& v) {
  return {{"regular", v.regular},
          {"selfadjoint", v.selfadjoint},
          {"selfadjoint_regular", v.selfadjoint_regular},
          {"adjoint_selfadjoint_regular", v.adjoint_selfadjoint_regular},
          {"states_checked", v.states_checked.size()},
          {"min_margin_decades", finite_or_null(v.min_margin)},
          {"witnesses", witnesses_to_json(v.witnesses)}};
}

inline json to_json(const CoreReport& r) {
  return {{"state", to_json(r.state)}, {"dim", r.dim}, {"residual", r.residual}, {"is_core", r.is_core}};
}

inline json to_json(const SeparationCertificate& c) {
  json w;
  for (const auto& [p, wt] : c.state.support()) w.push_back({p, wt});
  return {{"kind", to_string(c.kind)},
          {"state", to_json(c.state)},
          {"support", w},
          {"margin", c.margin},
          {"delta", c.delta},
          {"game_value", c.game_value},
          {"iterations", c.iterations}};
}

// ---------------------------------------------------------------------------
// CSV: header row, 15 significant digits

inline std::string fmt15(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<double>& r) {
    std::vector<std::string> cells;
    for (double x : r) cells.push_back(fmt15(x));
    row(std::move(cells));
  }
  void row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw InputError("csv row width differs from header");
    rows_.push_back(std::move(cells));
  }
  std::size_t size() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// (x, value) series for an algebra element on a grid.
inline Csv series_csv(const AlgebraElement& a, const std::string& value_name = "value") {
  Csv c({"x", value_name});
  for (Index p = 0; p < a.size(); ++p) c.row({a.space.coordinate(p), a(p).real()});
  return c;
}

}  // namespace cstarlab::io
