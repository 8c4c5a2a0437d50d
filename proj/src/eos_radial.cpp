#include "magstar/eos_radial.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace magstar {

void EquationOfState::validate() const {
  if (!(gamma > 1.2) || !(gamma <= 2.0))
    throw std::domain_error("equation of state: gamma must lie in (6/5, 2]");
  if (!allow_special_index && std::abs(gamma - 4.0 / 3.0) < special_index_window)
    throw std::domain_error(
        "equation of state: gamma too close to 4/3 (degenerate mass "
        "constraint); set allow_special_index to proceed");
}

double enthalpy(double rho, const EquationOfState& eos) {
  if (rho <= 0.0) return 0.0;
  return eos.gamma / (eos.gamma - 1.0) * std::pow(rho, eos.gamma - 1.0);
}

double enthalpy_inverse(double h, const EquationOfState& eos) {
  if (h <= 0.0) return 0.0;
  return std::pow((eos.gamma - 1.0) / eos.gamma * h, 1.0 / (eos.gamma - 1.0));
}

double RadialStarProfile::enthalpy(double rho) const {
  if (rho <= 0.0) return 0.0;
  return pressure_scale * eos.gamma / (eos.gamma - 1.0) *
         std::pow(rho, eos.gamma - 1.0);
}

double RadialStarProfile::enthalpy_inverse(double h) const {
  if (h <= 0.0) return 0.0;
  return std::pow((eos.gamma - 1.0) / (pressure_scale * eos.gamma) * h,
                  1.0 / (eos.gamma - 1.0));
}

namespace {

// theta'' + (2/xi) theta' + theta^n = 0, theta(0) = 1, theta'(0) = 0.
// State y = (theta, theta', mu, nu) with mu' = theta^n xi^2, nu' = theta^n xi.
struct LaneEmden {
  double n;

  static double pw(double th, double n) {
    return th > 0.0 ? std::pow(th, n) : 0.0;
  }

  void rhs(double xi, const double* y, double* dy) const {
    double tn = pw(y[0], n);
    dy[0] = y[1];
    dy[1] = -2.0 / xi * y[1] - tn;
    dy[2] = tn * xi * xi;
    dy[3] = tn * xi;
  }

  void rk4_step(double xi, double h, double* y) const {
    double k1[4], k2[4], k3[4], k4[4], t[4];
    rhs(xi, y, k1);
    for (int i = 0; i < 4; ++i) t[i] = y[i] + 0.5 * h * k1[i];
    rhs(xi + 0.5 * h, t, k2);
    for (int i = 0; i < 4; ++i) t[i] = y[i] + 0.5 * h * k2[i];
    rhs(xi + 0.5 * h, t, k3);
    for (int i = 0; i < 4; ++i) t[i] = y[i] + h * k3[i];
    rhs(xi + h, t, k4);
    for (int i = 0; i < 4; ++i)
      y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }

  // series start: theta = 1 - xi^2/6 + n xi^4/120 + O(xi^6),
  // theta^n = 1 - (n/6) xi^2 + O(xi^4)
  void series(double xi, double* y) const {
    double x2 = xi * xi;
    y[0] = 1.0 - x2 / 6.0 + n * x2 * x2 / 120.0;
    y[1] = -xi / 3.0 + n * xi * x2 / 30.0;
    y[2] = xi * x2 / 3.0 - n * x2 * x2 * xi / 30.0; // int theta^n t^2
    y[3] = x2 / 2.0 - n * x2 * x2 / 24.0;           // int theta^n t
  }
};

struct LaneEmdenResult {
  double xi1, mu1;            // first zero, int_0^{xi1} theta^n xi^2 dxi
  std::vector<double> xi, theta, dtheta, mu, nu;
};

// Integrate to the first zero of theta. Fills tables at `table_n + 1`
// uniformly spaced xi values over [0, xi1] on the second pass.
LaneEmdenResult lane_emden_solve(double n, int table_n) {
  LaneEmden le{n};
  const double xi_series = 1e-2;
  const double h0 = 1e-3;

  double y[4];
  le.series(xi_series, y);
  double xi = xi_series;
  double yprev[4];
  double xiprev = xi;

  // march until the profile crosses zero
  for (int guard = 0; guard < 4000000; ++guard) {
    for (int i = 0; i < 4; ++i) yprev[i] = y[i];
    xiprev = xi;
    le.rk4_step(xi, h0, y);
    xi += h0;
    if (y[0] <= 0.0) break;
    if (xi > 50.0) throw std::runtime_error("lane_emden_solve: no surface found");
  }

  // bisect the final step
  double lo = 0.0, hi = xi - xiprev;
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    double t[4] = {yprev[0], yprev[1], yprev[2], yprev[3]};
    le.rk4_step(xiprev, mid, t);
    if (t[0] > 0.0) lo = mid; else hi = mid;
  }
  double xi1 = xiprev + 0.5 * (lo + hi);

  LaneEmdenResult out;
  out.xi1 = xi1;

  // second pass: land exactly on the table nodes
  out.xi.resize(table_n + 1);
  out.theta.resize(table_n + 1);
  out.dtheta.resize(table_n + 1);
  out.mu.resize(table_n + 1);
  out.nu.resize(table_n + 1);
  double dxi = xi1 / table_n;
  out.xi[0] = 0.0;
  out.theta[0] = 1.0;
  out.dtheta[0] = 0.0;
  out.mu[0] = 0.0;
  out.nu[0] = 0.0;

  int node = 1;
  // nodes inside the series region come straight from the series
  while (node <= table_n && node * dxi <= xi_series) {
    double t[4];
    le.series(node * dxi, t);
    out.xi[node] = node * dxi;
    out.theta[node] = t[0];
    out.dtheta[node] = t[1];
    out.mu[node] = t[2];
    out.nu[node] = t[3];
    ++node;
  }
  le.series(xi_series, y);
  xi = xi_series;
  while (node <= table_n) {
    double target = node * dxi;
    int m = static_cast<int>(std::ceil((target - xi) / h0));
    double h = (target - xi) / m;
    for (int k = 0; k < m; ++k) {
      le.rk4_step(xi, h, y);
      xi += h;
    }
    out.xi[node] = target;
    out.theta[node] = std::max(y[0], 0.0);
    out.dtheta[node] = y[1];
    out.mu[node] = y[2];
    out.nu[node] = y[3];
    ++node;
  }
  out.mu1 = out.mu.back();
  return out;
}

} // namespace

RadialStarProfile solve_radial_star(const EquationOfState& eos, double radius,
                                    int table_n) {
  eos.validate();
  if (!(radius > 0.0)) throw std::domain_error("solve_radial_star: radius > 0");
  double n = eos.poly_index();
  LaneEmdenResult le = lane_emden_solve(n, table_n);

  RadialStarProfile p;
  p.eos = eos;
  p.radius = radius;
  p.xi1 = le.xi1;

  // alpha^2 = K gamma / (4 pi (gamma-1)) rho_c^{gamma-2}, radius = alpha xi1.
  double g = eos.gamma;
  if (std::abs(g - 2.0) < 1e-12) {
    p.rho_c = 1.0;
    p.pressure_scale = radius * radius / (le.xi1 * le.xi1) * 4.0 * M_PI *
                       (g - 1.0) / g;
  } else {
    p.pressure_scale = 1.0;
    double a2 = radius * radius / (le.xi1 * le.xi1);
    p.rho_c = std::pow(a2 * 4.0 * M_PI * (g - 1.0) / g, 1.0 / (g - 2.0));
  }
  double alpha = radius / le.xi1;
  p.mass = 4.0 * M_PI * alpha * alpha * alpha * p.rho_c * le.mu1;
  p.enthalpy_central = p.enthalpy(p.rho_c);

  // tables over s = xi / xi1
  int N = table_n;
  double hc = p.enthalpy_central;
  double pot_scale = 4.0 * M_PI * alpha * alpha * p.rho_c;
  p.rho0.x0 = p.h0.x0 = p.U0.x0 = 0.0;
  p.rho0.dx = p.h0.dx = p.U0.dx = 1.0 / N;
  p.rho0.f.resize(N + 1);
  p.rho0.df.resize(N + 1);
  p.h0.f.resize(N + 1);
  p.h0.df.resize(N + 1);
  p.U0.f.resize(N + 1);
  p.U0.df.resize(N + 1);
  double nu1 = le.nu.back();
  for (int i = 0; i <= N; ++i) {
    double th = le.theta[i], dth = le.dtheta[i];
    double xi = le.xi[i];
    double tn = th > 0 ? std::pow(th, n) : 0.0;
    p.rho0.f[i] = p.rho_c * tn;
    // n = 1 keeps a finite density slope at the surface; n > 1 flattens it
    double thpow = (n == 1.0) ? 1.0 : (th > 0 ? std::pow(th, n - 1.0) : 0.0);
    p.rho0.df[i] = p.rho_c * n * thpow * dth * le.xi1;
    p.h0.f[i] = hc * th;
    p.h0.df[i] = hc * dth * le.xi1;
    // U(xi) = 4 pi alpha^2 rho_c [ mu(xi)/xi + nu(xi1) - nu(xi) ]
    double mu_over_xi = (i == 0) ? 0.0 : le.mu[i] / xi;
    p.U0.f[i] = pot_scale * (mu_over_xi + nu1 - le.nu[i]);
    double dU = (i == 0) ? 0.0 : pot_scale * (-le.mu[i] / (xi * xi)) * le.xi1;
    p.U0.df[i] = dU;
  }
  return p;
}

std::pair<double, double> mass_of_central_density(const EquationOfState& eos,
                                                  double rho_c) {
  EquationOfState check = eos;
  check.allow_special_index = true; // mass itself is fine at 4/3
  check.validate();
  if (!(rho_c > 0.0))
    throw std::domain_error("mass_of_central_density: rho_c > 0");
  double n = eos.poly_index();
  LaneEmdenResult le = lane_emden_solve(n, 64);
  double g = eos.gamma;
  auto mass = [&](double rc) {
    double a2 = g / (4.0 * M_PI * (g - 1.0)) * std::pow(rc, g - 2.0);
    double alpha = std::sqrt(a2);
    return 4.0 * M_PI * alpha * alpha * alpha * rc * le.mu1;
  };
  double M = mass(rho_c);
  double step = 1e-4 * rho_c;
  double dM = (mass(rho_c + step) - mass(rho_c - step)) / (2.0 * step);
  return {M, dM};
}

} // namespace magstar
