#include "magstar/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "magstar/numerics.hpp"

namespace magstar {

namespace {
constexpr int kMaxModes = 64;
}

AxiGrid AxiGrid::make(int ns, int nmu) {
  if (ns < 1 || nmu < 1 || ns > kMaxModes || nmu > kMaxModes)
    throw std::invalid_argument("AxiGrid::make: mode counts out of range");
  AxiGrid g;
  g.ns = ns;
  g.nmu = nmu;
  gauss_radau_right(ns, g.s, g.ws);
  std::vector<double> x, w;
  gauss_legendre(2 * nmu, -1.0, 1.0, x, w);
  for (int i = 0; i < 2 * nmu; ++i)
    if (x[i] > 0) {
      g.mu.push_back(x[i]);
      g.wmu.push_back(w[i]);
    }
  return g;
}

double AxiGrid::ball_integral(const std::vector<double>& nodal) const {
  double acc = 0.0;
  for (int i = 0; i < ns; ++i) {
    double row = 0.0;
    for (int j = 0; j < nmu; ++j) row += wmu[j] * nodal[index(i, j)];
    acc += ws[i] * s[i] * s[i] * row;
  }
  return 4.0 * M_PI * acc;
}

std::shared_ptr<const FieldBasis> FieldBasis::make(int nrad, int nang) {
  if (nrad < 1 || nang < 1 || nrad > kMaxModes || nang > kMaxModes)
    throw std::invalid_argument("FieldBasis::make: mode counts out of range");
  auto b = std::make_shared<FieldBasis>();
  b->nrad = nrad;
  b->nang = nang;
  b->grid = AxiGrid::make(nrad, nang);
  int n = b->grid.nodes();
  b->eval_matrix.resize(n, b->ncoeff());
  std::vector<double> rowbuf(b->ncoeff());
  for (int i = 0; i < nrad; ++i)
    for (int j = 0; j < nang; ++j) {
      b->row(b->grid.s[i], b->grid.mu[j], rowbuf.data(), nullptr, nullptr);
      for (int c = 0; c < b->ncoeff(); ++c)
        b->eval_matrix(b->grid.index(i, j), c) = rowbuf[c];
    }
  b->lu_.compute(b->eval_matrix);
  return b;
}

void FieldBasis::row(double s, double mu, double* vals, double* dds,
                     double* ddmu) const {
  double T[kMaxModes], dT[kMaxModes], P[2 * kMaxModes], dP[2 * kMaxModes];
  chebyshev_shifted_all(nrad - 1, s, T, dds ? dT : nullptr);
  legendre_all(2 * (nang - 1), mu, P, ddmu ? dP : nullptr);
  double s2 = s * s;
  for (int m = 0; m < nrad; ++m)
    for (int l = 0; l < nang; ++l) {
      int c = coeff_index(m, l);
      vals[c] = s2 * T[m] * P[2 * l];
      if (dds) dds[c] = (2.0 * s * T[m] + s2 * dT[m]) * P[2 * l];
      if (ddmu) ddmu[c] = s2 * T[m] * dP[2 * l];
    }
}

void FieldBasis::reduced_row(double s, double mu, double* vals, double* dds,
                             double* ddmu) const {
  double T[kMaxModes], dT[kMaxModes], P[2 * kMaxModes], dP[2 * kMaxModes];
  chebyshev_shifted_all(nrad - 1, s, T, dds ? dT : nullptr);
  legendre_all(2 * (nang - 1), mu, P, ddmu ? dP : nullptr);
  for (int m = 0; m < nrad; ++m)
    for (int l = 0; l < nang; ++l) {
      int c = coeff_index(m, l);
      vals[c] = T[m] * P[2 * l];
      if (dds) dds[c] = dT[m] * P[2 * l];
      if (ddmu) ddmu[c] = T[m] * dP[2 * l];
    }
}

Eigen::VectorXd FieldBasis::nodal_to_coeff(const Eigen::VectorXd& nodal) const {
  return lu_.solve(nodal);
}

Eigen::VectorXd FieldBasis::coeff_to_nodal(const Eigen::VectorXd& coeff) const {
  return eval_matrix * coeff;
}

namespace {

// shared evaluation kernel: reduced value/derivatives by tensor contraction
void eval_reduced(const FieldBasis& b, const Eigen::VectorXd& coeff, double s,
                  double mu, double* v, double* ds, double* dmu) {
  double T[kMaxModes], dT[kMaxModes], P[2 * kMaxModes], dP[2 * kMaxModes];
  chebyshev_shifted_all(b.nrad - 1, s, T, ds ? dT : nullptr);
  legendre_all(2 * (b.nang - 1), mu, P, dmu ? dP : nullptr);
  double acc = 0, accs = 0, accm = 0;
  for (int m = 0; m < b.nrad; ++m) {
    double bm = 0, bml = 0;
    const double* c = coeff.data() + m * b.nang;
    for (int l = 0; l < b.nang; ++l) {
      bm += c[l] * P[2 * l];
      if (dmu) bml += c[l] * dP[2 * l];
    }
    acc += T[m] * bm;
    if (ds) accs += dT[m] * bm;
    if (dmu) accm += T[m] * bml;
  }
  if (v) *v = acc;
  if (ds) *ds = accs;
  if (dmu) *dmu = accm;
}

} // namespace

double Field::value(double s, double mu) const {
  double v;
  eval_reduced(*basis, coeff, s, mu, &v, nullptr, nullptr);
  return s * s * v;
}

void Field::value_grad(double s, double mu, double& v, double& ds,
                       double& dmu) const {
  double rv, rs, rm;
  eval_reduced(*basis, coeff, s, mu, &rv, &rs, &rm);
  v = s * s * rv;
  ds = 2.0 * s * rv + s * s * rs;
  dmu = s * s * rm;
}

void Field::reduced_grad(double s, double mu, double& v, double& ds,
                         double& dmu) const {
  eval_reduced(*basis, coeff, s, mu, &v, &ds, &dmu);
}

double Field::xnorm() const {
  const AxiGrid& g = basis->grid;
  double best = 0.0;
  for (int i = 0; i < g.ns; ++i)
    for (int j = 0; j < g.nmu; ++j) {
      double v, ds, dmu;
      value_grad(g.s[i], g.mu[j], v, ds, dmu);
      double s = g.s[i], mu = g.mu[j];
      double grad2 = ds * ds + dmu * dmu * (1.0 - mu * mu) / (s * s);
      best = std::max(best, std::sqrt(grad2) / s);
    }
  return best;
}

RayStretch ray_stretch(const Field& zeta, double s, double mu) {
  double v, ds, dmu;
  zeta.reduced_grad(s, mu, v, ds, dmu);
  return {1.0 + v, ds, dmu};
}

double deformation_det3(const RayStretch& r, double s) {
  return r.lam * r.lam * (r.lam + s * r.dls);
}

double deformation_det5(const RayStretch& r, double s) {
  double l2 = r.lam * r.lam;
  return l2 * l2 * (r.lam + s * r.dls);
}

std::array<double, 3> g_apply(const Field& zeta,
                              const std::array<double, 3>& x) {
  double s = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
  if (s == 0.0) return {0.0, 0.0, 0.0};
  double mu = std::abs(x[2]) / s;
  RayStretch r = ray_stretch(zeta, s, mu);
  return {r.lam * x[0], r.lam * x[1], r.lam * x[2]};
}

double g_det(const Field& zeta, const std::array<double, 3>& x) {
  double s = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
  if (s == 0.0) {
    // ray-dependent limit; report the polar-axis one
    RayStretch r0 = ray_stretch(zeta, 0.0, 1.0);
    return r0.lam * r0.lam * r0.lam;
  }
  double mu = std::abs(x[2]) / s;
  return deformation_det3(ray_stretch(zeta, s, mu), s);
}

double g_radius(const Field& zeta, double s, double mu) {
  return s * ray_stretch(zeta, s, mu).lam;
}

double g_inverse_radius(const Field& zeta, double srad, double mu) {
  if (srad <= 0.0) return 0.0;
  double hi = 1.0;
  double edge = g_radius(zeta, hi, mu);
  if (srad > edge) return -1.0; // beyond the star surface
  double lo = 0.0;
  double sg = srad; // initial guess: identity map
  for (int it = 0; it < 100; ++it) {
    RayStretch r = ray_stretch(zeta, sg, mu);
    double f = sg * r.lam - srad;
    double fp = r.lam + sg * r.dls; // > 0 inside the trust region
    double step = f / fp;
    double nxt = sg - step;
    if (nxt <= lo || nxt >= hi) nxt = 0.5 * (lo + hi);
    if (f > 0) hi = sg; else lo = sg;
    if (std::abs(step) < 1e-15) return nxt;
    sg = nxt;
  }
  return sg;
}

Mat2 Mat2::inverse() const {
  double d = det();
  return {a22 / d, -a12 / d, -a21 / d, a11 / d};
}

Mat2 g_jacobian_rz(const Field& zeta, double s, double mu) {
  RayStretch rs = ray_stretch(zeta, s, mu);
  // grad lambda in the (r, z) plane via s and mu = z/s
  double r = s * std::sqrt(std::max(0.0, 1.0 - mu * mu));
  double z = s * mu;
  double dl_dr = rs.dls * (r / s) + rs.dlm * (-mu * r / (s * s));
  double dl_dz = rs.dls * mu + rs.dlm * ((1.0 - mu * mu) / s);
  return {rs.lam + r * dl_dr, r * dl_dz, z * dl_dr, rs.lam + z * dl_dz};
}

double mass_factor(const Field& zeta, const RadialStarProfile& prof) {
  const AxiGrid& g = zeta.basis->grid;
  std::vector<double> nodal(g.nodes());
  for (int i = 0; i < g.ns; ++i) {
    double rho = prof.rho0_at(g.s[i]);
    for (int j = 0; j < g.nmu; ++j) {
      RayStretch r = ray_stretch(zeta, g.s[i], g.mu[j]);
      nodal[g.index(i, j)] = rho * deformation_det3(r, g.s[i]);
    }
  }
  return prof.mass / g.ball_integral(nodal);
}

double mass_factor_derivative(const Field& zeta, const Field& xi,
                              const RadialStarProfile& prof) {
  const AxiGrid& g = zeta.basis->grid;
  std::vector<double> nodal(g.nodes());
  for (int i = 0; i < g.ns; ++i) {
    double s = g.s[i];
    double rho = prof.rho0_at(s);
    for (int j = 0; j < g.nmu; ++j) {
      double mu = g.mu[j];
      RayStretch r = ray_stretch(zeta, s, mu);
      double dv, dds, ddm;
      xi.reduced_grad(s, mu, dv, dds, ddm); // delta lambda = xi / s^2
      double tr = (3.0 * dv + s * dds) / r.lam -
                  s * r.dls * (dv + s * dds) / (r.lam * (r.lam + s * r.dls));
      nodal[g.index(i, j)] = rho * deformation_det3(r, s) * tr;
    }
  }
  double M = mass_factor(zeta, prof);
  return -(M * M / prof.mass) * g.ball_integral(nodal);
}

} // namespace magstar
