#include "cstarlab/separation.hpp"
#include "cstarlab/lp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cstarlab;

TEST(MatrixGame, MatchesLinprogOracle) {
  for (const auto& g : oracle::game_cases()) {
    MatrixGameResult r = solve_matrix_game(g.P);
    EXPECT_NEAR(r.value, g.value, 1e-12);
    // the strategies certify the value from both sides
    VecXd payoff = g.P * r.column_strategy;
    EXPECT_GE(payoff.minCoeff(), g.value - 1e-10);
    VecXd rowpay = r.row_strategy.transpose() * g.P;
    EXPECT_LE(rowpay.maxCoeff(), g.value + 1e-10);
  }
}

TEST(MatrixGame, RandomGamesSatisfyDuality) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd P(4, 6);
    for (Index i = 0; i < P.size(); ++i) P(i) = random_uniform(rng, -1.0, 2.0);
    MatrixGameResult r = solve_matrix_game(P);
    double lower = (P * r.column_strategy).minCoeff();
    double upper = (r.row_strategy.transpose() * P).maxCoeff();
    EXPECT_NEAR(lower, upper, 1e-9);
    EXPECT_NEAR(r.value, lower, 1e-9);
  }
}

TEST(Simplex, ProjectionMatchesOracle) {
  VecXd p = project_simplex(oracle::simplex_projection_case_input());
  EXPECT_LE((p - oracle::simplex_projection_case_output()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Simplex, QuadraticBoundsBracketTheMinimum) {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    Eigen::MatrixXd B(5, 3);
    for (Index i = 0; i < B.size(); ++i) B(i) = random_uniform(rng, -1, 1);
    Eigen::MatrixXd Q = B.transpose() * B;
    VecXd b = VecXd::Random(3);
    SimplexQPResult r = minimize_quadratic_on_simplex(Q, b, 0.0);
    EXPECT_LE(r.lower_bound, r.value + 1e-15);
    EXPECT_LE(r.value - r.lower_bound, 1e-6);
    EXPECT_NEAR(r.x.sum(), 1.0, 1e-12);
  }
}

TEST(HatFunction, PeaksAtOneAndStaysInside) {
  BaseSpace s = BaseSpace::grid(0, 1, 101);
  AlgebraElement f = hat_function(0.5, 4.0, s);
  EXPECT_DOUBLE_EQ(f.values.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(f(25).real(), 0.0);
  EXPECT_THROW(hat_function(0.1, 4.0, s), InputError);
}

TEST(Flattening, MaxIsOneOverN) {
  for (Index N : {1, 5, 10, 20}) {
    BaseSpace s = BaseSpace::grid(0, 1, resolving_grid_size(N));
    FlatteningReport r = flattening_combination(N, s);
    EXPECT_NEAR(r.max_value, 1.0 / static_cast<double>(N), 1e-15);
    EXPECT_DOUBLE_EQ(r.min_member_norm, 1.0);
    EXPECT_DOUBLE_EQ(r.max_member_norm, 1.0);
  }
}

TEST(Flattening, CoarseGridRejected) {
  EXPECT_THROW(flattening_combination(10, BaseSpace::grid(0, 1, 101)), InputError);
}

TEST(PureStateCounterexample, SmallAtEveryPointButHullStaysFar) {
  BaseSpace s = BaseSpace::grid(0, 1, 1001);
  PureCounterexampleReport r = pure_state_counterexample(0.1, s);
  EXPECT_LE(r.max_value, 0.01 + 1e-12);
  EXPECT_GE(r.min_hull_sup_norm, 0.5 - 1e-6);
  EXPECT_EQ(r.mixed.kind, SeparationCertificate::Kind::MixedState);
  EXPECT_NEAR(r.mixed.margin, 0.25, 1e-6);
  EXPECT_EQ(r.mixed.state.support().size(), 2u);
}

TEST(Separation, SubmoduleCertificateIsBruteForceMax) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    Index nodes = 2 + static_cast<Index>(rng() % 5), d = 2 + static_cast<Index>(rng() % 3);
    BaseSpace s = BaseSpace::points(nodes);
    std::vector<ModuleVector> gens{ModuleVector::random(s, d, rng)};
    if (d > 2) gens.push_back(ModuleVector::random(s, d, rng));
    ModuleVector x0 = ModuleVector::random(s, d, rng);
    SeparationCertificate c = find_separating_state(make_problem(Submodule(gens), x0));
    double brute = 0.0;
    for (Index p = 0; p < nodes; ++p) {
      MatXcd G(d, static_cast<Index>(gens.size()));
      for (std::size_t j = 0; j < gens.size(); ++j) G.col(static_cast<Index>(j)) = gens[j].values.col(p);
      brute = std::max(brute, oracle::lstsq_distance2(G, x0.values.col(p)));
    }
    EXPECT_EQ(c.kind, SeparationCertificate::Kind::PureState);
    EXPECT_NEAR(c.margin, brute, 1e-10);
  }
}

TEST(Separation, MemberOfSubmoduleHasNoSeparatingState) {
  Rng rng(2);
  BaseSpace s = BaseSpace::points(3);
  ModuleVector g = ModuleVector::random(s, 2, rng);
  EXPECT_THROW(find_separating_state(make_problem(Submodule({g}), g)), HypothesisError);
}

TEST(Separation, ThreeVertexHullMargin) {
  // three orthogonal unit vectors on one point: distance^2 of 0 to the hull is 1/3,
  // one node so the margin equals it
  BaseSpace s = BaseSpace::single_point();
  std::vector<ModuleVector> v;
  for (Index k = 0; k < 3; ++k) v.push_back(ModuleVector::constant(s, VecXcd::Unit(3, k)));
  SeparationCertificate c = find_separating_state(make_problem(ConvexHull{v}, ModuleVector::zeros(s, 1 * 3)));
  EXPECT_NEAR(c.margin, 1.0 / 3.0, 1e-8);
  EXPECT_NEAR(c.delta, 1.0 / 3.0, 1e-8);
}

TEST(Separation, CertificateMarginBoundsSampledElements) {
  Rng rng(5);
  BaseSpace s = BaseSpace::grid(0, 1, 201);
  AlgebraElement f1 = hat_function(0.25, 5.0, s), f2 = hat_function(0.75, 5.0, s);
  VecXcd e = VecXcd::Ones(1);
  ConvexHull H{{ModuleVector::scalar_times(f1, e), ModuleVector::scalar_times(f2, e)}};
  SeparationProblem P = make_problem(H, ModuleVector::zeros(s, 1));
  SeparationCertificate c = find_separating_state(P);
  for (const auto& a : sample_A(P, 200, rng)) EXPECT_GE(evaluate_state(c.state, a).real(), c.margin - 1e-9);
}

TEST(ConvexInequality, RandomTrials) {
  Rng rng(11);
  BaseSpace s = BaseSpace::points(4);
  for (int t = 0; t < 300; ++t) {
    std::vector<ModuleVector> ys;
    for (int k = 0; k < 3; ++k) ys.push_back(ModuleVector::random(s, 2, rng));
    VecXd lam(3);
    for (Index k = 0; k < 3; ++k) lam(k) = random_uniform(rng);
    lam /= lam.sum();
    ModuleVector x0 = ModuleVector::random(s, 2, rng);
    ConvexInequalityResult r = convex_inequality_check(ys, lam, &x0);
    EXPECT_TRUE(r.ok);
    EXPECT_LE(r.worst_matrix, 1e-12);
    EXPECT_LE(r.worst_chain, 1e-12);
  }
}

TEST(ConvexInequality, NonConvexWeightsRejected) {
  BaseSpace s = BaseSpace::points(1);
  std::vector<ModuleVector> ys{ModuleVector::zeros(s, 1), ModuleVector::zeros(s, 1)};
  VecXd lam(2);
  lam << 0.7, 0.7;
  EXPECT_THROW(convex_inequality_check(ys, lam), InputError);
}

TEST(AConvexSearch, RunsAndReportsMargins) {
  Rng rng(3);
  BaseSpace s = BaseSpace::grid(0, 1, 101);
  VecXcd e = VecXcd::Ones(1);
  ConvexHull H{{ModuleVector::scalar_times(hat_function(0.25, 5.0, s), e),
                ModuleVector::scalar_times(hat_function(0.75, 5.0, s), e)}};
  AConvexSearchReport r = a_convex_search(H, ModuleVector::zeros(s, 1), 50, rng);
  EXPECT_EQ(r.samples, 50);
  EXPECT_GE(r.hull_mixed_margin, 0.0);
}
