#pragma once

#include "cstarlab/numeric.hpp"

#include <numeric>
#include <set>
#include <variant>

namespace cstarlab {

struct FinitePoints {
  std::vector<std::string> labels;
};

struct IntervalGrid {
  double a = 0.0;
  double b = 1.0;
  Index n = 2;
};

class BaseSpace {
 public:
  BaseSpace() : kind_(FinitePoints{{"*"}}) {}

  static BaseSpace points(std::vector<std::string> labels) {
    if (labels.empty()) throw InputError("FinitePoints needs at least one label");
    std::set<std::string> uniq(labels.begin(), labels.end());
    if (uniq.size() != labels.size()) throw InputError("FinitePoints labels must be distinct");
    BaseSpace s;
    s.kind_ = FinitePoints{std::move(labels)};
    return s;
  }

  static BaseSpace points(Index count) {
    std::vector<std::string> labels;
    for (Index i = 0; i < count; ++i) labels.push_back("p" + std::to_string(i));
    return points(std::move(labels));
  }

  static BaseSpace single_point() { return points(std::vector<std::string>{"*"}); }

  static BaseSpace grid(double a, double b, Index n) {
    if (n < 2) throw InputError("IntervalGrid needs n >= 2");
    if (!(a < b)) throw InputError("IntervalGrid needs a < b");
    BaseSpace s;
    s.kind_ = IntervalGrid{a, b, n};
    return s;
  }

  bool is_grid() const { return std::holds_alternative<IntervalGrid>(kind_); }
  const IntervalGrid& as_grid() const { return std::get<IntervalGrid>(kind_); }
  const FinitePoints& as_points() const { return std::get<FinitePoints>(kind_); }

  Index size() const {
    if (is_grid()) return as_grid().n;
    return static_cast<Index>(as_points().labels.size());
  }

  // Node coordinate on a grid; the node index for finite point sets.
  double coordinate(Index p) const {
    if (is_grid()) {
      const auto& g = as_grid();
      if (p == g.n - 1) return g.b;
      return g.a + (g.b - g.a) * static_cast<double>(p) / static_cast<double>(g.n - 1);
    }
    return static_cast<double>(p);
  }

  double spacing() const {
    if (!is_grid()) throw InputError("spacing requested on a finite point set");
    const auto& g = as_grid();
    return (g.b - g.a) / static_cast<double>(g.n - 1);
  }

  // Index of the grid node at x, or -1 when x is not a node.
  Index node_at(double x, double tol = 1e-12) const {
    if (!is_grid()) return -1;
    const auto& g = as_grid();
    double r = (x - g.a) / spacing();
    Index k = static_cast<Index>(std::llround(r));
    if (k < 0 || k >= g.n) return -1;
    if (std::abs(coordinate(k) - x) > tol * std::max(1.0, std::abs(x))) return -1;
    return k;
  }

  std::string label(Index p) const {
    if (is_grid()) return "x=" + std::to_string(coordinate(p));
    return as_points().labels[static_cast<std::size_t>(p)];
  }

  bool operator==(const BaseSpace& o) const {
    if (is_grid() != o.is_grid()) return false;
    if (is_grid()) {
      const auto &x = as_grid(), &y = o.as_grid();
      return x.a == y.a && x.b == y.b && x.n == y.n;
    }
    return as_points().labels == o.as_points().labels;
  }
  bool operator!=(const BaseSpace& o) const { return !(*this == o); }

 private:
  std::variant<FinitePoints, IntervalGrid> kind_;
};

struct AlgebraElement {
  BaseSpace space;
  VecXcd values;

  AlgebraElement() = default;
  AlgebraElement(BaseSpace s, VecXcd v) : space(std::move(s)), values(std::move(v)) {
    if (values.size() != space.size()) throw InputError("AlgebraElement: values length differs from node count");
  }

  static AlgebraElement constant(const BaseSpace& s, cd c) { return {s, VecXcd::Constant(s.size(), c)}; }

  template <class F>
  static AlgebraElement from_function(const BaseSpace& s, F&& f) {
    VecXcd v(s.size());
    for (Index p = 0; p < s.size(); ++p) v(p) = cd(f(s.coordinate(p)));
    return {s, v};
  }

  Index size() const { return values.size(); }
  cd operator()(Index p) const { return values(p); }

  bool is_selfadjoint(double tol = 1e-10) const {
    for (Index p = 0; p < values.size(); ++p)
      if (std::abs(values(p).imag()) > tol) return false;
    return true;
  }
};

inline AlgebraElement operator*(const AlgebraElement& a, const AlgebraElement& b) {
  if (a.space != b.space) throw InputError("algebra product across different spaces");
  return {a.space, a.values.cwiseProduct(b.values)};
}

inline AlgebraElement operator+(const AlgebraElement& a, const AlgebraElement& b) {
  if (a.space != b.space) throw InputError("algebra sum across different spaces");
  return {a.space, a.values + b.values};
}

inline AlgebraElement adjoint(const AlgebraElement& a) { return {a.space, a.values.conjugate()}; }

class StateSpec {
 public:
  enum class Kind { Pure, Measure };

  static StateSpec pure(const BaseSpace& s, Index p) {
    if (p < 0 || p >= s.size()) throw InputError("pure state node out of range");
    StateSpec st;
    st.kind_ = Kind::Pure;
    st.space_ = s;
    st.node_ = p;
    return st;
  }

  static StateSpec measure(const BaseSpace& s, VecXd w) {
    if (w.size() != s.size()) throw InputError("measure weights length differs from node count");
    for (Index i = 0; i < w.size(); ++i) {
      if (!std::isfinite(w(i))) throw InputError("measure weight is not finite");
      if (w(i) < 0.0) throw InputError("measure weights must be nonnegative");
    }
    double total = w.sum();
    if (total == 0.0) throw InputError("zero state: all weights vanish");
    if (std::abs(total - 1.0) > 1e-12) throw InputError("measure weights must sum to 1");
    StateSpec st;
    st.kind_ = Kind::Measure;
    st.space_ = s;
    st.weights_ = std::move(w);
    return st;
  }

  // Normalizes nonnegative weights.
  static StateSpec normalized_measure(const BaseSpace& s, VecXd w) {
    double total = w.sum();
    if (!(total > 0.0)) throw InputError("zero state: all weights vanish");
    w /= total;
    double drift = w.sum() - 1.0;
    for (Index i = 0; i < w.size() && drift != 0.0; ++i)
      if (w(i) > std::abs(drift)) {
        w(i) -= drift;
        break;
      }
    return measure(s, w);
  }

  static StateSpec uniform(const BaseSpace& s) {
    return normalized_measure(s, VecXd::Ones(s.size()));
  }

  // Trapezoid (Riemann) weights on an interval grid, normalized to a probability.
  static StateSpec lebesgue(const BaseSpace& s) {
    if (!s.is_grid()) throw InputError("Lebesgue weights need an interval grid");
    VecXd w = VecXd::Ones(s.size());
    w(0) = 0.5;
    w(s.size() - 1) = 0.5;
    return normalized_measure(s, w);
  }

  Kind kind() const { return kind_; }
  bool is_pure() const { return kind_ == Kind::Pure; }
  Index node() const { return node_; }
  const VecXd& weights() const { return weights_; }
  const BaseSpace& space() const { return space_; }

  // Nodes carrying positive weight with their weights.
  std::vector<std::pair<Index, double>> support() const {
    std::vector<std::pair<Index, double>> out;
    if (is_pure()) {
      out.emplace_back(node_, 1.0);
      return out;
    }
    for (Index p = 0; p < weights_.size(); ++p)
      if (weights_(p) > 0.0) out.emplace_back(p, weights_(p));
    return out;
  }

  std::string describe() const {
    if (is_pure()) return "Pure(" + std::to_string(node_) + ")";
    return "Measure(" + std::to_string(support().size()) + " nodes)";
  }

 private:
  Kind kind_ = Kind::Pure;
  BaseSpace space_;
  Index node_ = 0;
  VecXd weights_;
};

inline cd evaluate_state(const StateSpec& w, const AlgebraElement& a) {
  if (w.space() != a.space) throw InputError("evaluate_state: space mismatch");
  for (Index p = 0; p < a.values.size(); ++p)
    if (std::isnan(a.values(p).real()) || std::isnan(a.values(p).imag()))
      throw InputError("evaluate_state: NaN in algebra element");
  if (w.is_pure()) return a.values(w.node());
  cd acc = 0.0;
  for (Index p = 0; p < a.values.size(); ++p) acc += w.weights()(p) * a.values(p);
  return acc;
}

inline bool is_positive(const AlgebraElement& a, double tol = 1e-10) {
  for (Index p = 0; p < a.values.size(); ++p) {
    if (std::abs(a.values(p).imag()) > tol) return false;
    if (a.values(p).real() < -tol) return false;
  }
  return true;
}

struct PartitionOfUnity {
  std::vector<AlgebraElement> parts;
};

inline bool verify_partition_of_unity(const std::vector<AlgebraElement>& parts, double tol = 1e-10) {
  if (parts.empty()) throw InputError("verify_partition_of_unity: empty list");
  const BaseSpace& s = parts.front().space;
  VecXd total = VecXd::Zero(s.size());
  for (const auto& r : parts) {
    if (r.space != s) throw InputError("partition parts live on different spaces");
    total += r.values.cwiseAbs2();
  }
  return (total.array() - 1.0).abs().maxCoeff() <= tol;
}

inline PartitionOfUnity make_partition(std::vector<AlgebraElement> parts, double tol = 1e-10) {
  if (!verify_partition_of_unity(parts, tol)) throw InputError("parts do not form a partition of unity");
  return {std::move(parts)};
}

// sum_j rho_j^* x_j rho_j, evaluated nodewise.
inline AlgebraElement a_convex_combine(const PartitionOfUnity& parts, const std::vector<AlgebraElement>& xs) {
  if (parts.parts.size() != xs.size()) throw InputError("a_convex_combine: length mismatch");
  if (xs.empty()) throw InputError("a_convex_combine: empty input");
  const BaseSpace& s = xs.front().space;
  VecXcd acc = VecXcd::Zero(s.size());
  for (std::size_t j = 0; j < xs.size(); ++j) {
    if (xs[j].space != s || parts.parts[j].space != s) throw InputError("a_convex_combine: space mismatch");
    const VecXcd& r = parts.parts[j].values;
    acc += r.conjugate().cwiseProduct(xs[j].values).cwiseProduct(r);
  }
  return {s, acc};
}

// Square roots of a triangular-bump partition subordinate to a cover of the grid
// by `pieces` overlapping intervals.
inline PartitionOfUnity bump_partition(const BaseSpace& s, Index pieces) {
  if (!s.is_grid()) throw InputError("bump_partition needs an interval grid");
  if (pieces < 1) throw InputError("bump_partition needs at least one piece");
  const auto& g = s.as_grid();
  std::vector<VecXd> chi(static_cast<std::size_t>(pieces), VecXd::Zero(s.size()));
  double width = (g.b - g.a) / static_cast<double>(std::max<Index>(pieces - 1, 1));
  for (Index p = 0; p < s.size(); ++p) {
    double x = s.coordinate(p);
    double total = 0.0;
    for (Index j = 0; j < pieces; ++j) {
      double c = pieces == 1 ? 0.5 * (g.a + g.b) : g.a + width * static_cast<double>(j);
      double v = pieces == 1 ? 1.0 : std::max(0.0, 1.0 - std::abs(x - c) / width);
      chi[static_cast<std::size_t>(j)](p) = v;
      total += v;
    }
    for (Index j = 0; j < pieces; ++j) chi[static_cast<std::size_t>(j)](p) /= total;
  }
  PartitionOfUnity out;
  for (auto& c : chi) out.parts.emplace_back(s, VecXcd(c.cwiseSqrt().cast<cd>()));
  return out;
}

}  // namespace cstarlab
