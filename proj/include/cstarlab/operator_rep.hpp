#pragma once

#include "cstarlab/cstar_space.hpp"
#include "cstarlab/fiber.hpp"

#include <functional>
#include <memory>

namespace cstarlab {

enum class OpKind { DiagonalField, DifferentialPair, Extension, BoundaryField, Matrix, Hat, Sum, Field };

inline std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::DiagonalField: return "DiagonalField";
    case OpKind::DifferentialPair: return "DifferentialPair";
    case OpKind::Extension: return "Extension";
    case OpKind::BoundaryField: return "BoundaryField";
    case OpKind::Matrix: return "Matrix";
    case OpKind::Hat: return "Hat";
    case OpKind::Sum: return "Sum";
    case OpKind::Field: return "Field";
  }
  return "?";
}

// A field x -> T(x) of fiber operators over the base space. The adjoint fiber
// is the fiber of the module adjoint T* at x; by default it is the adjoint of
// the fiber, which is correct whenever T is given pointwise by a closed
// operator with pointwise adjoint (bounded fields, constant fields).
class OperatorModel {
 public:
  virtual ~OperatorModel() = default;
  virtual OpKind kind() const = 0;
  virtual const BaseSpace& space() const = 0;
  virtual Index fiber_dim() const = 0;
  virtual FiberOperator fiber(Index p) const = 0;
  virtual FiberOperator adjoint_fiber(Index p) const { return adjoint(fiber(p)); }
  virtual std::string description() const { return to_string(kind()); }
};

using OperatorRep = std::shared_ptr<const OperatorModel>;

class FieldOperator : public OperatorModel {
 public:
  using Builder = std::function<FiberOperator(Index)>;

  FieldOperator(BaseSpace s, Index d, Builder f, Builder adj = nullptr, std::string desc = "field",
                OpKind k = OpKind::Field)
      : space_(std::move(s)), dim_(d), fiber_(std::move(f)), adj_(std::move(adj)), desc_(std::move(desc)), kind_(k) {}

  OpKind kind() const override { return kind_; }
  const BaseSpace& space() const override { return space_; }
  Index fiber_dim() const override { return dim_; }
  FiberOperator fiber(Index p) const override {
    check(p);
    return fiber_(p);
  }
  FiberOperator adjoint_fiber(Index p) const override {
    check(p);
    return adj_ ? adj_(p) : adjoint(fiber_(p));
  }
  std::string description() const override { return desc_; }

 private:
  void check(Index p) const {
    if (p < 0 || p >= space_.size()) throw InputError("operator field: node index out of range");
  }
  BaseSpace space_;
  Index dim_;
  Builder fiber_;
  Builder adj_;
  std::string desc_;
  OpKind kind_;
};

inline OperatorRep make_field(BaseSpace s, Index d, FieldOperator::Builder f, FieldOperator::Builder adj = nullptr,
                              std::string desc = "field", OpKind k = OpKind::Field) {
  return std::make_shared<FieldOperator>(std::move(s), d, std::move(f), std::move(adj), std::move(desc), k);
}

// Bounded field given by one matrix per node (standard fiber metric).
inline OperatorRep diagonal_field(const BaseSpace& s, std::vector<MatXcd> mats) {
  if (static_cast<Index>(mats.size()) != s.size()) throw InputError("diagonal_field: one matrix per node required");
  Index d = mats.empty() ? 0 : mats.front().rows();
  for (const auto& m : mats)
    if (m.rows() != d || m.cols() != d) throw InputError("diagonal_field: matrices must share a square shape");
  auto data = std::make_shared<std::vector<MatXcd>>(std::move(mats));
  return make_field(
      s, d, [data](Index p) { return bounded_fiber((*data)[static_cast<std::size_t>(p)], VecXd(), "D(p)"); }, nullptr,
      "diagonal field", OpKind::DiagonalField);
}

// Multiplication by a scalar algebra element on fibers of dimension d.
inline OperatorRep multiplication_field(const AlgebraElement& a, Index d) {
  std::vector<MatXcd> mats;
  for (Index p = 0; p < a.size(); ++p) mats.push_back(a(p) * MatXcd::Identity(d, d));
  return diagonal_field(a.space, std::move(mats));
}

// A constant field: the same fiber operator over every node.
inline OperatorRep constant_field(const BaseSpace& s, FiberOperator F, OpKind k = OpKind::Matrix,
                                  std::string desc = "matrix") {
  check_fiber(F);
  auto f = std::make_shared<FiberOperator>(std::move(F));
  auto adj = std::make_shared<FiberOperator>(adjoint(*f));
  return make_field(
      s, f->dim(), [f](Index) { return *f; }, [adj](Index) { return *adj; }, std::move(desc), k);
}

inline OperatorRep matrix_operator(const MatXcd& A, const BaseSpace& s = BaseSpace::single_point()) {
  return constant_field(s, bounded_fiber(A, VecXd(), "matrix"), OpKind::Matrix, "matrix");
}

// The module adjoint as an operator in its own right (closed T: T** = T).
inline OperatorRep adjoint_operator(const OperatorRep& T) {
  return make_field(
      T->space(), T->fiber_dim(), [T](Index p) { return T->adjoint_fiber(p); }, [T](Index p) { return T->fiber(p); },
      "(" + T->description() + ")*", OpKind::Field);
}

// [[0, T*],[T, 0]] on the doubled module.
inline OperatorRep hat_operator(const OperatorRep& T) {
  return make_field(
      T->space(), 2 * T->fiber_dim(),
      [T](Index p) { return hat(T->fiber(p), T->adjoint_fiber(p)); },
      [T](Index p) {
        FiberOperator F = T->fiber(p);
        FiberOperator Fs = T->adjoint_fiber(p);
        return hat(F, Fs);
      },
      "hat(" + T->description() + ")", OpKind::Hat);
}

// T + V on dom(T) ∩ dom(V). The adjoint fiber is computed from the summed fiber.
inline OperatorRep sum_operator(const OperatorRep& T, const OperatorRep& V) {
  if (T->space() != V->space() || T->fiber_dim() != V->fiber_dim())
    throw InputError("sum_operator: operands act on different modules");
  return make_field(
      T->space(), T->fiber_dim(), [T, V](Index p) { return sum(T->fiber(p), V->fiber(p)); }, nullptr,
      T->description() + "+" + V->description(), OpKind::Sum);
}

}  // namespace cstarlab
