#pragma once
#include <utility>

#include "magstar/numerics.hpp"

namespace magstar {

// Polytropic equation of state p = K rho^gamma. The standalone operators use
// K = 1; a star profile owns its own pressure scale (see RadialStarProfile).
struct EquationOfState {
  double gamma = 2.0;
  // gamma = 4/3 makes the mass independent of the central density and the
  // linearized problem singular. Solving there requires an explicit opt-in;
  // approaching it is how the conditioning blow-up is demonstrated.
  bool allow_special_index = false;
  double special_index_window = 1e-3;

  double poly_index() const { return 1.0 / (gamma - 1.0); }
  void validate() const; // throws std::domain_error
};

// h(rho) with K = 1: (gamma/(gamma-1)) rho^(gamma-1), h(0) = 0.
double enthalpy(double rho, const EquationOfState& eos);
// inverse of the above; nonpositive h maps to 0
double enthalpy_inverse(double h, const EquationOfState& eos);

// Nonrotating, unmagnetized background star of radius `radius`.
// Tables are over the normalized radius s = r / radius in [0, 1].
struct RadialStarProfile {
  EquationOfState eos;
  double radius = 1.0;
  double rho_c = 1.0;         // central density
  double xi1 = 0.0;           // first zero of the scaled density profile
  double mass = 0.0;
  double pressure_scale = 1.0; // K in p = K rho^gamma
  double enthalpy_central = 0.0;

  HermiteTable rho0, h0, U0;  // density, enthalpy, potential vs s

  double rho0_at(double s) const { return s >= 1.0 ? 0.0 : rho0.value(s); }
  double drho0_at(double s) const { return s >= 1.0 ? 0.0 : rho0.deriv(s); }
  double h0_at(double s) const { return s >= 1.0 ? 0.0 : h0.value(s); }
  // potential continues as mass/r outside the support
  double U0_at(double s) const {
    return s >= 1.0 ? mass / (radius * s) : U0.value(s);
  }
  double dU0_at(double s) const {
    return s >= 1.0 ? -mass / (radius * s * s) : U0.deriv(s);
  }

  // K-aware enthalpy of this star's fluid
  double enthalpy(double rho) const;
  double enthalpy_inverse(double h) const;
};

// Integrates the hydrostatic background and rescales it to the requested
// radius. For gamma = 2 the radius is set by the pressure scale (rho_c = 1);
// otherwise K = 1 and rho_c is solved for.
RadialStarProfile solve_radial_star(const EquationOfState& eos,
                                    double radius = 1.0, int table_n = 2048);

// Total mass of the K = 1 radial star with given central density, and its
// derivative by central finite differences (relative step 1e-4).
// The derivative changes sign at gamma = 4/3.
std::pair<double, double> mass_of_central_density(const EquationOfState& eos,
                                                  double rho_c);

} // namespace magstar
