#pragma once
#include <cstddef>
#include <functional>
#include <vector>

namespace magstar {

// Complete elliptic integrals K(m), E(m), parameter convention m = k^2.
// mc = 1 - m must be supplied by the caller; computing it at the call site
// from exact geometric quantities avoids cancellation near m = 1.
void elliptic_ke(double m, double mc, double& K, double& E);
double elliptic_k(double m);

// dK/dm and dE/dm at given (m, mc, K, E).
double elliptic_dk(double m, double mc, double K, double E);
double elliptic_de(double m, double K, double E);

// Hhat(x) = [(2-x)K(x) - 2E(x)] / x^2, the reduced ring kernel profile.
// Smooth on [0,1), Hhat(0) = pi/16, log-divergent as x -> 1.
double ring_profile(double x, double xc);
// d Hhat / dx
double ring_profile_deriv(double x, double xc);
// Variants taking precomputed K(x), E(x) so one elliptic evaluation can be
// shared between kernels (they still switch to the series for small x).
double ring_profile_ke(double x, double K, double E);
double ring_profile_deriv_ke(double x, double xc, double K, double E);

// Gauss-Legendre rule on [a, b], n points.
void gauss_legendre(int n, double a, double b, std::vector<double>& x,
                    std::vector<double>& w);

// Gauss-Radau rule on [0, 1] including the right endpoint 1, excluding 0.
// Exact for polynomials of degree <= 2n-2.
void gauss_radau_right(int n, std::vector<double>& x, std::vector<double>& w);

// Legendre P_l(x) for l = 0..lmax, values and first derivatives.
void legendre_all(int lmax, double x, double* P, double* dP);

// Shifted Chebyshev T_m(2s-1) for m = 0..mmax, values and d/ds.
void chebyshev_shifted_all(int mmax, double s, double* T, double* dT);

// Horner evaluation of sum c_k t^k and its derivative.
double polyval(const std::vector<double>& c, double t);
double polyval_deriv(const std::vector<double>& c, double t);
// Antiderivative with F(0) = 0.
double polyval_anti(const std::vector<double>& c, double t);

// Cubic Hermite interpolation on a uniform table.
struct HermiteTable {
  double x0 = 0, dx = 1;
  std::vector<double> f, df;
  double value(double x) const;
  double deriv(double x) const;
};

// Deterministic block-partitioned parallel loop. Results must be written to
// per-index slots by the body; reductions happen in index order afterwards,
// so the output is independent of the worker count.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t)>& body);

} // namespace magstar
