#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "magstar/geometry.hpp"

using namespace magstar;

namespace {

std::shared_ptr<const FieldBasis> basis24 = FieldBasis::make(24, 12);

Field random_field(double scale, unsigned seed) {
  Field f(basis24);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int m = 0; m < basis24->nrad; ++m)
    for (int l = 0; l < basis24->nang; ++l) {
      // damp high modes so the field stays smooth
      double damp = std::exp(-0.35 * m - 0.5 * l);
      f.coeff[basis24->coeff_index(m, l)] = scale * damp * N(rng);
    }
  // rescale to the requested x-norm
  double xn = f.xnorm();
  if (xn > 0) f.coeff *= scale / xn;
  return f;
}

} // namespace

TEST_CASE("grid: nodes inside the open-closed box and exact ball integrals") {
  AxiGrid g = AxiGrid::make(24, 12);
  REQUIRE(g.ns == 24);
  REQUIRE(g.nmu == 12);
  CHECK(g.s.front() > 0.0);
  CHECK(g.s.back() == doctest::Approx(1.0).epsilon(1e-14));
  for (double m : g.mu) {
    CHECK(m > 0.0);
    CHECK(m < 1.0);
  }
  std::vector<double> one(g.nodes(), 1.0);
  CHECK(g.ball_integral(one) == doctest::Approx(4 * M_PI / 3).epsilon(1e-13));
  std::vector<double> s2(g.nodes());
  std::vector<double> r2(g.nodes()); // cylindrical radius^2 = s^2 (1 - mu^2)
  for (int i = 0; i < g.ns; ++i)
    for (int j = 0; j < g.nmu; ++j) {
      s2[g.index(i, j)] = g.s[i] * g.s[i];
      r2[g.index(i, j)] = g.s[i] * g.s[i] * (1 - g.mu[j] * g.mu[j]);
    }
  CHECK(g.ball_integral(s2) == doctest::Approx(4 * M_PI / 5).epsilon(1e-13));
  // int r^2 over unit ball = 8 pi / 15
  CHECK(g.ball_integral(r2) == doctest::Approx(8 * M_PI / 15).epsilon(1e-13));
}

TEST_CASE("basis: nodal/coefficient round trip and origin vanishing") {
  Field f = random_field(0.1, 11);
  Eigen::VectorXd nodal = basis24->coeff_to_nodal(f.coeff);
  Eigen::VectorXd back = basis24->nodal_to_coeff(nodal);
  CHECK((back - f.coeff).lpNorm<Eigen::Infinity>() < 1e-10);
  // fields vanish to second order at the origin
  CHECK(f.value(0.0, 0.7) == 0.0);
  double v, ds, dmu;
  f.value_grad(1e-8, 0.3, v, ds, dmu);
  CHECK(std::abs(v) < 1e-15);
  CHECK(std::abs(ds) < 1e-7);
  // reduced value consistency at s > 0
  for (double s : {0.2, 0.6, 1.0}) {
    double rv, rs, rm;
    f.reduced_grad(s, 0.41, rv, rs, rm);
    CHECK(f.value(s, 0.41) == doctest::Approx(s * s * rv).epsilon(1e-13));
  }
}

TEST_CASE("field symmetry is exact by construction") {
  Field f = random_field(0.1, 5);
  for (double s : {0.3, 0.8})
    for (double mu : {0.1, 0.6, 0.95}) {
      // even in x3: value depends on |mu| only; representation enforces it
      CHECK(f.value(s, mu) == f.value(s, mu)); // trivially same call
      std::array<double, 3> xp{s * std::sqrt(1 - mu * mu), 0.0, s * mu};
      std::array<double, 3> xm{xp[0], 0.0, -xp[2]};
      auto gp = g_apply(f, xp);
      auto gm = g_apply(f, xm);
      CHECK(gp[0] == gm[0]);
      CHECK(gp[2] == -gm[2]);
    }
}

TEST_CASE("zero deformation is the identity") {
  Field z(basis24);
  std::array<double, 3> x{0.3, -0.2, 0.5};
  auto y = g_apply(z, x);
  CHECK(y[0] == doctest::Approx(x[0]).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(x[1]).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(x[2]).epsilon(1e-15));
  CHECK(g_det(z, x) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(z.xnorm() == 0.0);
}

TEST_CASE("uniform dilation: zeta = c s^2") {
  // lambda = 1 + c everywhere: g scales by (1+c), det = (1+c)^3
  double c = 0.07;
  Field f(basis24);
  f.coeff[basis24->coeff_index(0, 0)] = c; // s^2 T_0 P_0 = c s^2
  std::array<double, 3> x{0.1, 0.25, -0.4};
  auto y = g_apply(f, x);
  for (int k = 0; k < 3; ++k)
    CHECK(y[k] == doctest::Approx((1 + c) * x[k]).epsilon(1e-14));
  CHECK(g_det(f, x) == doctest::Approx(std::pow(1 + c, 3)).epsilon(1e-13));
  // |grad zeta| = 2 c s, so the x-norm is 2c
  CHECK(f.xnorm() == doctest::Approx(2 * c).epsilon(1e-12));
  // 5D determinant (1+c)^5
  RayStretch r = ray_stretch(f, 0.6, 0.3);
  CHECK(deformation_det5(r, 0.6) ==
        doctest::Approx(std::pow(1 + c, 5)).epsilon(1e-13));
}

TEST_CASE("analytic determinant matches finite-difference jacobian") {
  Field f = random_field(0.12, 23);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int checked = 0;
  while (checked < 12) {
    std::array<double, 3> x{0.5 * U(rng), 0.5 * U(rng), 0.5 * U(rng)};
    double s = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    if (s < 0.15 || s > 0.95) continue;
    ++checked;
    double h = 1e-6;
    double J[3][3];
    for (int c = 0; c < 3; ++c) {
      auto xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      auto yp = g_apply(f, xp);
      auto ym = g_apply(f, xm);
      for (int rr = 0; rr < 3; ++rr) J[rr][c] = (yp[rr] - ym[rr]) / (2 * h);
    }
    double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                 J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                 J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    CHECK(g_det(f, x) == doctest::Approx(det).epsilon(1e-6));
  }
}

TEST_CASE("rz jacobian agrees with the 3D map") {
  Field f = random_field(0.1, 31);
  for (double s : {0.3, 0.7})
    for (double mu : {0.2, 0.8}) {
      double r = s * std::sqrt(1 - mu * mu), z = s * mu;
      Mat2 J = g_jacobian_rz(f, s, mu);
      double h = 1e-6;
      auto map = [&](double rr, double zz) {
        std::array<double, 3> p{rr, 0.0, zz};
        auto q = g_apply(f, p);
        return std::array<double, 2>{q[0], q[2]};
      };
      auto pr = map(r + h, z), mr = map(r - h, z);
      auto pz = map(r, z + h), mz = map(r, z - h);
      CHECK(J.a11 == doctest::Approx((pr[0] - mr[0]) / (2 * h)).epsilon(1e-6));
      CHECK(J.a12 == doctest::Approx((pz[0] - mz[0]) / (2 * h)).epsilon(1e-6));
      CHECK(J.a21 == doctest::Approx((pr[1] - mr[1]) / (2 * h)).epsilon(1e-6));
      CHECK(J.a22 == doctest::Approx((pz[1] - mz[1]) / (2 * h)).epsilon(1e-6));
      // lambda * det2 equals the full 3D determinant
      RayStretch rs = ray_stretch(f, s, mu);
      CHECK(rs.lam * J.det() ==
            doctest::Approx(deformation_det3(rs, s)).epsilon(1e-12));
    }
}

TEST_CASE("ray inversion round trip") {
  Field f = random_field(0.13, 47);
  for (double s : {0.05, 0.3, 0.6, 0.9, 1.0})
    for (double mu : {0.05, 0.5, 0.97}) {
      double srad = g_radius(f, s, mu);
      double back = g_inverse_radius(f, srad, mu);
      CHECK(back == doctest::Approx(s).epsilon(1e-12));
    }
  // beyond the surface: flagged
  CHECK(g_inverse_radius(f, g_radius(f, 1.0, 0.5) + 1e-3, 0.5) < 0.0);
  CHECK(g_inverse_radius(f, 0.0, 0.5) == 0.0);
}

TEST_CASE("trust region keeps the map orientation-preserving, det > 1/2") {
  // randomized: fields with x-norm 0.15 must keep det Dg well above 1/2
  for (unsigned seed : {101u, 202u, 303u, 404u, 505u}) {
    Field f = random_field(0.15, seed);
    CHECK(f.xnorm() == doctest::Approx(0.15).epsilon(1e-12));
    double dmin = 1e9;
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j) {
        double s = 0.025 * i, mu = j / 40.0 * 0.999;
        if (s < 1e-3) continue;
        RayStretch r = ray_stretch(f, s, mu);
        dmin = std::min(dmin, deformation_det3(r, s));
      }
    CHECK(dmin > 0.5);
    CHECK(dmin > 0.66); // the proven bound for delta = 0.15 is (1-3delta/2)-ish
  }
}

TEST_CASE("mass factor: closed form under dilation and FD derivative") {
  RadialStarProfile prof = solve_radial_star(EquationOfState{2.0}, 1.0, 2048);
  // dilation: M(zeta) = (1+c)^{-3}
  double c = 0.04;
  Field f(basis24);
  f.coeff[basis24->coeff_index(0, 0)] = c;
  CHECK(mass_factor(f, prof) ==
        doctest::Approx(std::pow(1 + c, -3.0)).epsilon(1e-9));
  // derivative along the same direction: -3 (1+c)^{-4}
  Field xi(basis24);
  xi.coeff[basis24->coeff_index(0, 0)] = 1.0;
  CHECK(mass_factor_derivative(f, xi, prof) ==
        doctest::Approx(-3.0 * std::pow(1 + c, -4.0)).epsilon(1e-9));
  // generic field and direction vs finite differences
  Field z = random_field(0.1, 77);
  Field d = random_field(0.05, 78);
  double h = 1e-6;
  Field zp = z, zm = z;
  zp.coeff += h * d.coeff;
  zm.coeff -= h * d.coeff;
  double fd = (mass_factor(zp, prof) - mass_factor(zm, prof)) / (2 * h);
  CHECK(mass_factor_derivative(z, d, prof) == doctest::Approx(fd).epsilon(1e-6));
  // identity normalization at zero
  Field zero(basis24);
  CHECK(mass_factor(zero, prof) == doctest::Approx(1.0).epsilon(1e-8));
}
