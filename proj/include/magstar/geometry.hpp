#pragma once
#include <Eigen/Dense>
#include <array>
#include <memory>
#include <vector>

#include "magstar/eos_radial.hpp"

namespace magstar {

// Quadrature/collocation grid on the reduced half-disk coordinates
// (s, mu) in (0,1] x (0,1), s the base radius, mu = x3/|x| (fields are even).
struct AxiGrid {
  int ns = 0, nmu = 0;
  std::vector<double> s, ws;   // right Gauss-Radau on (0, 1]
  std::vector<double> mu, wmu; // positive roots of P_{2 nmu}

  static AxiGrid make(int ns, int nmu);
  int nodes() const { return ns * nmu; }
  int index(int i, int j) const { return i * nmu + j; }

  // integral of an even axisymmetric function over the unit ball,
  // 4 pi sum_ij ws_i s_i^2 wmu_j f_ij
  double ball_integral(const std::vector<double>& nodal) const;
};

// Tensor basis s^2 T_m(2s-1) P_{2l}(mu), m < nrad, l < nang, with its square
// collocation grid and the nodal <-> coefficient maps. Every element vanishes
// to second order at the origin, so represented fields are admissible
// deformations/potentials (f(0) = 0, grad f(0) = 0).
class FieldBasis {
 public:
  int nrad, nang;
  AxiGrid grid;
  Eigen::MatrixXd eval_matrix; // (node, coeff)

  static std::shared_ptr<const FieldBasis> make(int nrad, int nang);

  int ncoeff() const { return nrad * nang; }
  int coeff_index(int m, int l) const { return m * nang + l; }

  // basis values (and optional s-/mu-derivatives) of all elements at (s, mu)
  void row(double s, double mu, double* vals, double* dds, double* ddmu) const;
  // same for the reduced elements T_m(2s-1) P_{2l}(mu) (the s^2 factor removed)
  void reduced_row(double s, double mu, double* vals, double* dds,
                   double* ddmu) const;

  Eigen::VectorXd nodal_to_coeff(const Eigen::VectorXd& nodal) const;
  Eigen::VectorXd coeff_to_nodal(const Eigen::VectorXd& coeff) const;

 private:
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

// Scalar axisymmetric even field as basis coefficients.
struct Field {
  std::shared_ptr<const FieldBasis> basis;
  Eigen::VectorXd coeff;

  explicit Field(std::shared_ptr<const FieldBasis> b)
      : basis(std::move(b)), coeff(Eigen::VectorXd::Zero(basis->ncoeff())) {}
  Field(std::shared_ptr<const FieldBasis> b, Eigen::VectorXd c)
      : basis(std::move(b)), coeff(std::move(c)) {}

  double value(double s, double mu) const;
  void value_grad(double s, double mu, double& v, double& ds, double& dmu) const;
  // f / s^2 and its derivatives; smooth up to the origin
  void reduced_grad(double s, double mu, double& v, double& ds,
                    double& dmu) const;

  // sup over grid nodes of |grad f| / |x|
  double xnorm() const;
};

// Ray stretch factor lambda = 1 + zeta/s^2 and its derivatives at (s, mu).
struct RayStretch {
  double lam, dls, dlm; // lambda, d lambda/ds, d lambda/dmu
};
RayStretch ray_stretch(const Field& zeta, double s, double mu);

// det Dg = lambda^2 (lambda + s dlambda/ds) for the 3D map g = lambda x
double deformation_det3(const RayStretch& r, double s);
// five-dimensional extension: lambda^4 (lambda + s dlambda/ds)
double deformation_det5(const RayStretch& r, double s);

// 3D point operations (x3-even; points with x3 < 0 handled by symmetry)
std::array<double, 3> g_apply(const Field& zeta, const std::array<double, 3>& x);
double g_det(const Field& zeta, const std::array<double, 3>& x);

// deformed radius of the ray (s, mu) and its inverse along the same ray;
// returns a negative value if srad lies beyond the deformed star surface
double g_radius(const Field& zeta, double s, double mu);
double g_inverse_radius(const Field& zeta, double srad, double mu);

// 2x2 Jacobian of g restricted to the (r, z) half-plane at base point (s, mu);
// the azimuthal stretch (the third eigenvalue) is lambda itself
struct Mat2 {
  double a11, a12, a21, a22;
  Mat2 inverse() const;
  double det() const { return a11 * a22 - a12 * a21; }
};
Mat2 g_jacobian_rz(const Field& zeta, double s, double mu);

// normalization M(zeta) = mass / int_B1 rho0 det Dg, evaluated on the basis
// grid of zeta, and its directional derivative at zeta in direction xi
double mass_factor(const Field& zeta, const RadialStarProfile& prof);
double mass_factor_derivative(const Field& zeta, const Field& xi,
                              const RadialStarProfile& prof);

} // namespace magstar
