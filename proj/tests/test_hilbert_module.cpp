#include "cstarlab/hilbert_module.hpp"
#include "cstarlab/separation.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cstarlab;

namespace {

ModuleVector rand_vec(const BaseSpace& s, Index d, Rng& rng) { return ModuleVector::random(s, d, rng); }

}  // namespace

TEST(InnerProduct, SesquilinearAndHermitian) {
  Rng rng(1);
  BaseSpace s = BaseSpace::points(5);
  for (int t = 0; t < 100; ++t) {
    ModuleVector x = rand_vec(s, 3, rng), y = rand_vec(s, 3, rng);
    AlgebraElement a(s, random_vector(5, rng));
    AlgebraElement xy = inner_product(x, y), yx = inner_product(y, x);
    EXPECT_LE((xy.values - yx.values.conjugate()).cwiseAbs().maxCoeff(), 1e-12);
    // <x, y a> = <x, y> a
    AlgebraElement lhs = inner_product(x, y * a);
    EXPECT_LE((lhs.values - xy.values.cwiseProduct(a.values)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(is_positive(inner_product(x, x)));
  }
}

TEST(InnerProduct, CauchySchwarzNodewise) {
  Rng rng(2);
  BaseSpace s = BaseSpace::points(4);
  for (int t = 0; t < 200; ++t) {
    ModuleVector x = rand_vec(s, 4, rng), y = rand_vec(s, 4, rng);
    AlgebraElement xy = inner_product(x, y), xx = inner_product(x, x), yy = inner_product(y, y);
    for (Index p = 0; p < 4; ++p) EXPECT_LE(std::norm(xy(p)), xx(p).real() * yy(p).real() * (1 + 1e-12));
  }
}

TEST(InnerProduct, PolarizationBound) {
  Rng rng(3);
  BaseSpace s = BaseSpace::grid(0, 1, 9);
  for (int t = 0; t < 500; ++t) {
    ModuleVector x = rand_vec(s, 2, rng), y = rand_vec(s, 2, rng);
    EXPECT_LE(polarization_violation(x, y), 1e-12);
  }
}

TEST(ModuleNorm, SupOverNodes) {
  BaseSpace s = BaseSpace::points(3);
  MatXcd m(2, 3);
  m << 1, 0, 3, 0, 2, 4;
  EXPECT_DOUBLE_EQ(module_norm(ModuleVector(s, m)), 5.0);
}

TEST(ModuleVector, ShapeChecks) {
  BaseSpace s = BaseSpace::points(3);
  EXPECT_THROW(ModuleVector(s, MatXcd::Zero(2, 2)), InputError);
  EXPECT_THROW(inner_product(ModuleVector::zeros(s, 2), ModuleVector::zeros(s, 3)), InputError);
  MatXcd bad = MatXcd::Zero(1, 3);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(ModuleVector(s, bad), InputError);
}

TEST(Submodule, DistanceMatchesLeastSquaresOracle) {
  Rng rng(4);
  BaseSpace s = BaseSpace::points(6);
  for (int t = 0; t < 50; ++t) {
    std::vector<ModuleVector> gens{rand_vec(s, 4, rng), rand_vec(s, 4, rng)};
    // a zero generator at one node to exercise rank drops
    gens[1].values.col(2).setZero();
    Submodule L(gens);
    ModuleVector x0 = rand_vec(s, 4, rng);
    DistanceResult d = submodule_distance(L, x0);
    double worst = 0.0;
    for (Index p = 0; p < 6; ++p) {
      MatXcd G(4, 2);
      G.col(0) = gens[0].values.col(p);
      G.col(1) = gens[1].values.col(p);
      double o = oracle::lstsq_distance2(G, x0.values.col(p));
      EXPECT_NEAR(d.per_node(p), o, 1e-10);
      worst = std::max(worst, o);
    }
    EXPECT_NEAR(d.delta, worst, 1e-10);
  }
}

TEST(Submodule, ElementOfSpanHasZeroDistance) {
  Rng rng(5);
  BaseSpace s = BaseSpace::points(3);
  ModuleVector g = rand_vec(s, 3, rng);
  AlgebraElement a(s, random_vector(3, rng));
  DistanceResult d = submodule_distance(Submodule({g}), g * a);
  EXPECT_LE(d.delta, 1e-20);
}
