#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "magstar/eos_radial.hpp"

using namespace magstar;

namespace {
double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }
}

TEST_CASE("equation of state guard") {
  EquationOfState ok{2.0};
  CHECK_NOTHROW(ok.validate());
  CHECK_NOTHROW(EquationOfState{5.0 / 3.0}.validate());
  CHECK_THROWS_AS(EquationOfState{1.1}.validate(), std::domain_error);
  CHECK_THROWS_AS(EquationOfState{2.3}.validate(), std::domain_error);
  CHECK_THROWS_AS(EquationOfState{4.0 / 3.0}.validate(), std::domain_error);
  EquationOfState forced{4.0 / 3.0};
  forced.allow_special_index = true;
  CHECK_NOTHROW(forced.validate());
}

TEST_CASE("enthalpy closed forms and inverse") {
  EquationOfState e2{2.0};
  CHECK(enthalpy(1.0, e2) == doctest::Approx(2.0).epsilon(1e-15));
  EquationOfState e43{4.0 / 3.0};
  CHECK(enthalpy(8.0, e43) == doctest::Approx(8.0).epsilon(1e-14));
  for (double rho : {0.3, 1.0, 2.5}) {
    CHECK(enthalpy_inverse(enthalpy(rho, e2), e2) ==
          doctest::Approx(rho).epsilon(1e-13));
    EquationOfState e53{5.0 / 3.0};
    CHECK(enthalpy_inverse(enthalpy(rho, e53), e53) ==
          doctest::Approx(rho).epsilon(1e-13));
  }
  CHECK(enthalpy(0.0, e2) == 0.0);
  CHECK(enthalpy_inverse(-1.0, e2) == 0.0);
}

TEST_CASE("radial star at gamma = 2 matches the closed form") {
  // rho0(s) = sin(pi s)/(pi s), surface at xi1 = pi, mass 4/pi, U0(0) = 8/pi
  RadialStarProfile p = solve_radial_star(EquationOfState{2.0}, 1.0, 2048);
  CHECK(std::abs(p.xi1 - M_PI) < 1e-8);
  CHECK(p.rho_c == 1.0);
  CHECK(p.pressure_scale == doctest::Approx(2.0 / M_PI).epsilon(1e-10));
  CHECK(p.mass == doctest::Approx(4.0 / M_PI).epsilon(1e-8));
  CHECK(p.U0_at(0.0) == doctest::Approx(8.0 / M_PI).epsilon(1e-8));
  for (double s : {0.05, 0.17, 0.33, 0.5, 0.71, 0.9, 0.99}) {
    CHECK(std::abs(p.rho0_at(s) - sinc(M_PI * s)) < 1e-6);
    CHECK(std::abs(p.h0_at(s) - 4.0 / M_PI * sinc(M_PI * s)) < 1e-6);
    CHECK(std::abs(p.U0_at(s) - 4.0 / M_PI * (sinc(M_PI * s) + 1.0)) < 1e-6);
    CHECK(std::abs(p.drho0_at(s) -
                   (std::cos(M_PI * s) - sinc(M_PI * s)) / s) < 1e-5);
  }
  // exterior potential: mass / r
  CHECK(p.U0_at(2.0) == doctest::Approx(p.mass / 2.0).epsilon(1e-12));
  CHECK(p.enthalpy(p.rho_c) == doctest::Approx(4.0 / M_PI).epsilon(1e-12));
}

TEST_CASE("hydrostatic balance holds for generic gamma") {
  // h(rho0(s)) - U0(s) must be constant inside the star
  for (double g : {2.0, 5.0 / 3.0, 1.8}) {
    RadialStarProfile p = solve_radial_star(EquationOfState{g}, 1.0, 2048);
    double c0 = p.enthalpy(p.rho0_at(0.0)) - p.U0_at(0.0);
    double hc = p.enthalpy_central;
    for (double s : {0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 0.97}) {
      double c = p.enthalpy(p.rho0_at(s)) - p.U0_at(s);
      CHECK(std::abs(c - c0) < 1e-6 * hc);
    }
    // surface: h -> 0, so the constant is -U0(1) = -mass/radius
    CHECK(c0 == doctest::Approx(-p.mass / p.radius).epsilon(1e-7));
  }
}

TEST_CASE("radial star at gamma = 5/3") {
  RadialStarProfile p = solve_radial_star(EquationOfState{5.0 / 3.0}, 1.0, 1024);
  CHECK(p.xi1 == doctest::Approx(3.65375374).epsilon(1e-7));
  CHECK(p.pressure_scale == 1.0);
  // central density solves radius = alpha(rho_c) xi1 with K = 1
  double a2 = 5.0 / 3.0 / (4 * M_PI * (2.0 / 3.0)) * std::pow(p.rho_c, -1.0 / 3.0);
  CHECK(std::sqrt(a2) * p.xi1 == doctest::Approx(1.0).epsilon(1e-9));
  // density decreases monotonically to zero at the surface
  double prev = p.rho0_at(0.0);
  for (int i = 1; i <= 20; ++i) {
    double cur = p.rho0_at(i / 20.0);
    CHECK(cur < prev + 1e-14);
    prev = cur;
  }
  CHECK(p.rho0_at(1.0) == 0.0);
}

TEST_CASE("mass vs central density scaling and the 4/3 degeneracy") {
  // M ~ rho_c^{(3 gamma - 4)/2} with K = 1
  for (double g : {1.5, 5.0 / 3.0, 2.0}) {
    EquationOfState eos{g};
    auto [M1, dM1] = mass_of_central_density(eos, 1.0);
    auto [M2, dM2] = mass_of_central_density(eos, 2.0);
    CHECK(M1 > 0);
    double expo = (3.0 * g - 4.0) / 2.0;
    CHECK(M2 / M1 == doctest::Approx(std::pow(2.0, expo)).epsilon(1e-6));
    CHECK(dM1 > 0.0); // gamma > 4/3: heavier center, heavier star
  }
  {
    EquationOfState eos{1.25}; // below 4/3: opposite sign
    auto [M, dM] = mass_of_central_density(eos, 1.0);
    CHECK(M > 0);
    CHECK(dM < 0.0);
  }
  {
    EquationOfState eos{4.0 / 3.0};
    eos.allow_special_index = true;
    auto [M, dM] = mass_of_central_density(eos, 1.3);
    CHECK(M > 0);
    CHECK(std::abs(dM) < 1e-8 * M); // mass blind to rho_c
  }
}
