#include "cstarlab/localization.hpp"
#include "cstarlab/operator_rep.hpp"

#include <gtest/gtest.h>

using namespace cstarlab;

TEST(Localization, PureStateIsPointEvaluation) {
  BaseSpace s = BaseSpace::grid(0, 1, 11);
  LocalizationResult L = localize_module(s, 3, StateSpec::pure(s, 4));
  EXPECT_EQ(L.dim(), 3);
  EXPECT_TRUE(L.null_nodes.empty());
  Rng rng(1);
  ModuleVector f = ModuleVector::random(s, 3, rng);
  EXPECT_LE((L.map(f) - f.values.col(4)).norm(), 0.0);
}

TEST(Localization, MeasureStateCollectsNullSpace) {
  BaseSpace s = BaseSpace::points(4);
  VecXd w(4);
  w << 0.5, 0.0, 0.5, 0.0;
  LocalizationResult L = localize_module(s, 2, StateSpec::measure(s, w));
  EXPECT_EQ(L.dim(), 4);
  EXPECT_EQ(L.null_nodes, (std::vector<Index>{1, 3}));
  // vectors supported on the null nodes map to zero norm
  MatXcd m = MatXcd::Zero(2, 4);
  m.col(1) << 1, 2;
  m.col(3) << 3, 4;
  EXPECT_EQ(L.norm(L.map(ModuleVector(s, m))), 0.0);
}

TEST(Localization, IsometryProperty) {
  Rng rng(2);
  BaseSpace s = BaseSpace::grid(0, 1, 15);
  for (int t = 0; t < 200; ++t) {
    VecXd w(15);
    for (Index i = 0; i < 15; ++i) w(i) = random_uniform(rng) < 0.3 ? 0.0 : random_uniform(rng);
    if (w.sum() == 0.0) w(0) = 1.0;
    StateSpec st = StateSpec::normalized_measure(s, w);
    LocalizationResult L = localize_module(s, 3, st);
    ModuleVector f = ModuleVector::random(s, 3, rng), g = ModuleVector::random(s, 3, rng);
    cd lhs = L.inner(L.map(f), L.map(g));
    cd rhs = evaluate_state(st, inner_product(f, g));
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Localization, RejectsForeignState) {
  EXPECT_THROW(localize_module(BaseSpace::points(2), 1, StateSpec::pure(BaseSpace::points(3), 0)), InputError);
}

TEST(LocalOperator, BlocksFollowSupport) {
  BaseSpace s = BaseSpace::points(3);
  std::vector<MatXcd> mats;
  for (int p = 0; p < 3; ++p) mats.push_back(MatXcd::Identity(2, 2) * static_cast<double>(p + 1));
  OperatorRep T = diagonal_field(s, mats);
  VecXd w(3);
  w << 0.2, 0.0, 0.8;
  LocalizationResult loc = localize_module(T, StateSpec::measure(s, w));
  LocalOperator L = localize_operator(T, loc);
  ASSERT_EQ(L.blocks.size(), 2u);
  VecXcd v = VecXcd::Ones(4);
  VecXcd out = L.apply(v);
  EXPECT_NEAR(out(0).real(), 1.0, 1e-15);
  EXPECT_NEAR(out(3).real(), 3.0, 1e-15);
  DefectReport d = local_defects(L);
  EXPECT_EQ(d.n_plus + d.n_minus, 0);
}

TEST(Localization, DminDefectsAddAcrossBlocks) {
  DeficiencyRef d = shared_deficiency_data(101);
  BaseSpace s = BaseSpace::points(3);
  OperatorRep T = make_field(
      s, 101, [d](Index) { return d->dmin(); }, [d](Index) { return d->dmax(); }, "T_min", OpKind::DifferentialPair);
  DefectReport r = local_defects(localize_operator(T, localize_module(T, StateSpec::uniform(s))));
  EXPECT_EQ(r.n_plus, 3);
  EXPECT_EQ(r.n_minus, 3);
}

TEST(Core, TrigonometricCoreApproximatesSmoothDomainElements) {
  DeficiencyRef d = shared_deficiency_data(101);
  BaseSpace s = BaseSpace::single_point();
  OperatorRep T = build_extension(d, 1.0, s);
  auto smooth = [](Index, const FiberOperator& F) {
    VecXd t = unit_grid(F.dim());
    MatXcd m(F.dim(), 2);
    for (Index i = 0; i < F.dim(); ++i) {
      m(i, 0) = std::exp(std::sin(2.0 * std::numbers::pi * t(i)));
      m(i, 1) = std::polar(1.0, std::cos(2.0 * std::numbers::pi * t(i)));
    }
    for (Index k = 0; k < 2; ++k) m.col(k) = project_to_domain(F, m.col(k));
    return m;
  };
  double prev = 1e300;
  for (int m : {2, 6, 12}) {
    auto r = check_core(T, trigonometric_core(s, 101, m), all_pure_states(s), 1e-6, smooth);
    EXPECT_LT(r.front().residual, prev);  // improves with the degree
    prev = r.front().residual;
  }
  EXPECT_LE(prev, 1e-5);
}

TEST(Core, FullBasisIsCoreOfMatrixOperator) {
  BaseSpace s = BaseSpace::points(2);
  MatXcd A = MatXcd::Random(4, 4);
  OperatorRep T = matrix_operator(A + A.adjoint(), s);
  std::vector<ModuleVector> gens;
  for (Index k = 0; k < 4; ++k) gens.push_back(ModuleVector::constant(s, VecXcd::Unit(4, k)));
  for (const auto& r : check_core(T, Submodule(gens), all_pure_states(s))) EXPECT_TRUE(r.is_core);
  gens.pop_back();
  for (const auto& r : check_core(T, Submodule(gens), all_pure_states(s))) EXPECT_FALSE(r.is_core);
}

TEST(Localization, GraphNormIdentity) {
  Rng rng(8);
  BaseSpace s = BaseSpace::points(3);
  OperatorRep T = build_extension(shared_deficiency_data(101), std::polar(1.0, 0.4), s);
  for (int t = 0; t < 50; ++t) {
    VecXd w(3);
    for (Index i = 0; i < 3; ++i) w(i) = random_uniform(rng);
    ModuleVector x = random_domain_element(T, rng);
    EXPECT_LE(graph_norm_identity_residual(T, StateSpec::normalized_measure(s, w), x), 1e-9);
  }
}
