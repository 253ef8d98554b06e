#pragma once

// Reference values and independent reference computations used by the tests.
// Nothing here calls into the library's solvers.

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

// Graph normalization constant of phi_+(t) = c e^{-t} on [0,1]; closed form, evaluated in Python.
inline constexpr double kPhiPlusConstant = 1.0754151025300256;

// zeta(lambda) = (lambda + e) / (lambda e + 1), evaluated in Python.
struct ZetaCase {
  cd lambda;
  cd zeta;
};
inline std::vector<ZetaCase> zeta_cases() {
  return {{cd(1.0, 0.0), cd(1.0, 0.0)},
          {cd(-1.0, 0.0), cd(-1.0, 0.0)},
          {cd(0.0, 1.0), cd(0.6480542736638855, -0.7615941559557649)},
          {std::polar(1.0, 0.7), cd(0.9446646772637246, -0.32803757030288927)}};
}

// Matrix games max_w min_k (P w)_k solved with scipy.optimize.linprog.
struct GameCase {
  Eigen::MatrixXd P;
  double value;
};
inline std::vector<GameCase> game_cases() {
  Eigen::MatrixXd a(2, 2), b(2, 2), c(3, 3);
  a << 3, 1, 0, 2;
  b << 1, -1, -1, 1;
  c << 2, 5, 1, 4, 0, 3, 1, 2, 6;
  return {{a, 1.5}, {b, 0.0}, {c, 2.595238095238096}};
}

// Euclidean projection of (0.8, 0.5, -0.2, 0.1) onto the simplex (sort-and-threshold in numpy).
inline Eigen::VectorXd simplex_projection_case_input() {
  Eigen::VectorXd v(4);
  v << 0.8, 0.5, -0.2, 0.1;
  return v;
}
inline Eigen::VectorXd simplex_projection_case_output() {
  Eigen::VectorXd v(4);
  v << 0.65, 0.35, 0.0, 0.0;
  return v;
}

// Spectrum of -i d/dt on [0,1] with f(1) = zeta f(0), from a dense eigensolve:
// f = e^{i theta t} g with g periodic, so the operator becomes theta - i d/dt on
// periodic g, discretized with the trigonometric (cotangent) differentiation
// matrix on m (odd) equispaced points.
inline std::vector<double> twisted_periodic_spectrum(cd zeta, int m) {
  const double theta = std::arg(zeta);
  const double h = 1.0 / m;
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) {
      if (j == k) {
        A(j, k) = theta;
        continue;
      }
      // derivative matrix for odd m: 0.5 (-1)^{j-k} / sin(pi (j-k) h), scaled by 2 pi for period 1
      double d = 2.0 * std::numbers::pi * 0.5 * (((j - k) % 2 == 0) ? 1.0 : -1.0) / std::sin(std::numbers::pi * (j - k) * h);
      A(j, k) = cd(0.0, -1.0) * d;
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
  std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + m);
  std::sort(ev.begin(), ev.end());
  return ev;
}

// Eigenvalues of the twisted-periodic model closest to theta + 2 pi k for |k| <= kmax.
inline std::vector<double> twisted_periodic_low_spectrum(cd zeta, int kmax, int m = 63) {
  std::vector<double> all = twisted_periodic_spectrum(zeta, m);
  std::vector<double> out;
  const double theta = std::arg(zeta);
  for (int k = -kmax; k <= kmax; ++k) {
    double target = theta + 2.0 * std::numbers::pi * k;
    double best = all.front();
    for (double x : all)
      if (std::abs(x - target) < std::abs(best - target)) best = x;
    out.push_back(best);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Squared distance of x to span(G) by least squares through a full SVD.
inline double lstsq_distance2(const Eigen::MatrixXcd& G, const Eigen::VectorXcd& x) {
  if (G.cols() == 0 || G.norm() == 0.0) return x.squaredNorm();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-12);
  Eigen::VectorXcd c = svd.solve(x);
  return (x - G * c).squaredNorm();
}

// Oscillator levels: D^2 = (S^2 + T^2) -/+ 1 on the two blocks, so spec D = {+-sqrt(2k)}.
inline std::vector<double> oscillator_levels(int kmax) {
  std::vector<double> v{0.0};
  for (int k = 1; k <= kmax; ++k) {
    v.push_back(std::sqrt(2.0 * k));
    v.push_back(-std::sqrt(2.0 * k));
  }
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace oracle
