#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "magstar/equilibrium.hpp"
#include "magstar/linv_fd.hpp"

using namespace magstar;

namespace {

EquilibriumParams params_of(int nrad, int nang, double gamma = 2.0) {
  EquilibriumParams par;
  par.eos.gamma = gamma;
  par.nrad = nrad;
  par.nang = nang;
  return par;
}

// shared instances; construction dominates the cost of most cases
const EquilibriumProblem& small_prob() {
  static EquilibriumProblem p(params_of(8, 4));
  return p;
}
const EquilibriumProblem& mid_prob() {
  static EquilibriumProblem p(params_of(12, 6));
  return p;
}
const EquilibriumProblem& full_prob() {
  static EquilibriumProblem p(params_of(24, 12));
  return p;
}

Eigen::VectorXd project(const EquilibriumProblem& prob,
                        const ResidualVectors& rv) {
  const auto& b = prob.basis();
  Eigen::VectorXd g(2 * b->ncoeff());
  g.head(b->ncoeff()) = b->nodal_to_coeff(rv.f1);
  g.tail(b->ncoeff()) = b->nodal_to_coeff(rv.f2);
  return g;
}

// FD column of the full matrix in the direction d at the given step
Eigen::VectorXd fd_direction(const EquilibriumProblem& prob,
                             const EquilibriumState& st, double omega2,
                             double eps, const Eigen::VectorXd& d, double h) {
  const int nc = prob.basis()->ncoeff();
  EquilibriumState sp = st, sm = st;
  sp.zeta.coeff += h * d.head(nc);
  sp.phi.coeff += h * d.tail(nc);
  sm.zeta.coeff -= h * d.head(nc);
  sm.phi.coeff -= h * d.tail(nc);
  return (project(prob, prob.residual(sp, omega2, eps)) -
          project(prob, prob.residual(sm, omega2, eps))) /
         (2.0 * h);
}

// mass of a deformed solution on an independent refined grid
double refined_mass(const EquilibriumProblem& prob, const SolveResult& sr,
                    int ns, int nmu) {
  const auto& prof = prob.profile();
  AxiGrid g = AxiGrid::make(ns, nmu);
  std::vector<double> f(std::size_t(ns) * nmu);
  for (int i = 0; i < ns; ++i)
    for (int j = 0; j < nmu; ++j) {
      RayStretch r = ray_stretch(sr.state.zeta, g.s[i], g.mu[j]);
      f[g.index(i, j)] = prof.rho0_at(g.s[i]) * deformation_det3(r, g.s[i]);
    }
  return sr.mass_factor * g.ball_integral(f);
}

} // namespace

TEST_CASE("current amplitude: value, derivative, antiderivative") {
  CurrentFunction lin(std::vector<double>{1.0, 1.0}); // 1 + x
  CHECK(lin(0.3) == doctest::Approx(1.3).epsilon(1e-15));
  CHECK(lin.deriv(0.3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(lin.anti(0.3) == doctest::Approx(0.345).epsilon(1e-15));
  CHECK(lin.anti(0.0) == 0.0);

  // cubic checked against hand-expanded values at x = 0.7 and x = -0.4
  CurrentFunction cub(std::vector<double>{0.5, -1.0, 2.0, 0.25});
  CHECK(cub(0.7) == doctest::Approx(0.86575).epsilon(1e-14));
  CHECK(cub.deriv(0.7) == doctest::Approx(2.1675).epsilon(1e-14));
  CHECK(cub.anti(0.7) ==
        doctest::Approx(0.34867291666666667).epsilon(1e-14));
  CHECK(cub(-0.4) == doctest::Approx(1.204).epsilon(1e-14));
  CHECK(cub.deriv(-0.4) == doctest::Approx(-2.48).epsilon(1e-14));
  CHECK(cub.anti(-0.4) ==
        doctest::Approx(-0.32106666666666667).epsilon(1e-14));

  // polynomial degree is capped at six; an empty list is meaningless
  CHECK_THROWS_AS(CurrentFunction(std::vector<double>(8, 1.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(CurrentFunction(std::vector<double>{}),
                  std::invalid_argument);
  CHECK_NOTHROW(CurrentFunction(std::vector<double>(7, 1.0)));
}

TEST_CASE("background star solves the balance at every node") {
  // the drive-free residual at the round star is pure quadrature noise
  ResidualVectors rv = small_prob().residual(small_prob().zero_state(), 0.0, 0.0);
  CHECK(rv.sup() < 1e-12);
  CHECK(rv.f2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(rv.mass == doctest::Approx(1.0).epsilon(1e-12));

  ResidualVectors rf = full_prob().residual(full_prob().zero_state(), 0.0, 0.0);
  CHECK(rf.sup() < 1e-12);

  // a soft index has an edge density ~ (1-s)^(3/2); its mass quadrature
  // converges slowly, so the zero point is dirtier but still small
  EquilibriumProblem soft(params_of(24, 12, 5.0 / 3.0));
  ResidualVectors rs = soft.residual(soft.zero_state(), 0.0, 0.0);
  CHECK(rs.sup() < 1e-5);
}

TEST_CASE("spinning the round star leaves only the centrifugal term") {
  const EquilibriumProblem& prob = small_prob();
  ResidualVectors rv = prob.residual(prob.zero_state(), 0.01, 0.0);
  const AxiGrid& g = prob.basis()->grid;
  double worst = 0.0;
  for (int i = 0; i < g.ns; ++i)
    for (int j = 0; j < g.nmu; ++j) {
      double s = g.s[i], mu = g.mu[j];
      double want = 0.005 * s * s * (1.0 - mu * mu);
      worst = std::max(worst, std::fabs(rv.f1[g.index(i, j)] - want));
    }
  CHECK(worst < 1e-13);
  CHECK(rv.f2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("represented fields vanish at the center and are even") {
  // a constant offset is not representable: every element is O(s^2) at the
  // center, which is what pins the free constant of the balance
  auto basis = small_prob().basis();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd c(basis->ncoeff());
  for (int i = 0; i < basis->ncoeff(); ++i) c[i] = gauss(rng);
  Field f(basis, c);
  CHECK(f.value(0.0, 0.3) == 0.0);
  CHECK(f.value(0.0, 1.0) == 0.0);
  CHECK(std::fabs(f.value(1e-7, 0.5)) < 1e-12);
  // even in the axial coordinate: only even-degree angular modes exist
  for (double s : {0.3, 0.8})
    for (double mu : {0.2, 0.77})
      CHECK(f.value(s, mu) ==
            doctest::Approx(f.value(s, -mu)).epsilon(1e-13));
}

TEST_CASE("flux residual with a unit current matches the independent route") {
  EquilibriumParams par = params_of(12, 6);
  par.current = CurrentFunction(std::vector<double>{1.0});
  EquilibriumProblem prob(par);
  const auto& prof = prob.profile();

  ResidualVectors rv = prob.residual(prob.zero_state(), 0.0, 0.1);
  RingInverseFD fd(6.0, 240);
  auto sol = fd.solve([&](double s, double) { return prof.rho0_at(s); });
  const AxiGrid& g = prob.basis()->grid;
  double vmax = 0.0, dmax = 0.0;
  for (int i = 0; i < g.ns; ++i)
    for (int j = 0; j < g.nmu; ++j) {
      double s = g.s[i], mu = g.mu[j];
      double p = s * std::sqrt(1.0 - mu * mu);
      double ref = -0.1 * sol.value(p, s * mu);
      vmax = std::max(vmax, std::fabs(rv.f2[g.index(i, j)]));
      dmax = std::max(dmax, std::fabs(rv.f2[g.index(i, j)] - ref));
    }
  CHECK(vmax > 1e-3); // the comparison is not vacuous
  CHECK(dmax < 5e-6);

  // with no drive the flux residual is the flux itself
  ResidualVectors r0 = prob.residual(prob.zero_state(), 0.0, 0.0);
  CHECK(r0.f2.cwiseAbs().maxCoeff() == 0.0);

  // a current vanishing at zero flux has nothing to drive
  EquilibriumParams pz = params_of(8, 4);
  pz.current = CurrentFunction(std::vector<double>{0.0, 1.0});
  EquilibriumProblem probz(pz);
  ResidualVectors rz = probz.residual(probz.zero_state(), 0.0, 0.3);
  CHECK(rz.f2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("derivative blocks at explicit states") {
  const EquilibriumProblem& prob = small_prob();
  const int nc = prob.basis()->ncoeff();
  EquilibriumState zero = prob.zero_state();

  // flux enters the balance only through the current amplitude: at the round
  // star the block is -eps k(0) times the identity
  Eigen::MatrixXd J = prob.jacobian(zero, 0.0, 0.05);
  Eigen::MatrixXd tr = J.topRightCorner(nc, nc) +
                       0.05 * Eigen::MatrixXd::Identity(nc, nc);
  CHECK(tr.cwiseAbs().maxCoeff() < 1e-12);

  // with both drives off the matrix is block-diagonal and the flux block is
  // the identity; the deformation block stays nontrivial (gravity + mass)
  Eigen::MatrixXd J0 = prob.jacobian(zero, 0.0, 0.0);
  CHECK(J0.topRightCorner(nc, nc).cwiseAbs().maxCoeff() == 0.0);
  CHECK(J0.bottomLeftCorner(nc, nc).cwiseAbs().maxCoeff() == 0.0);
  Eigen::MatrixXd br = J0.bottomRightCorner(nc, nc) -
                       Eigen::MatrixXd::Identity(nc, nc);
  CHECK(br.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(J0.topLeftCorner(nc, nc).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("matrix agrees with directional finite differences") {
  const EquilibriumProblem& prob = small_prob();
  const int nc = prob.basis()->ncoeff();
  const double w2 = 0.02, ep = 0.05;
  EquilibriumState st = prob.predictor_state(w2, ep);
  Eigen::MatrixXd J = prob.jacobian(st, w2, ep);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd d(2 * nc);
    for (int i = 0; i < 2 * nc; ++i) d[i] = gauss(rng);
    d /= d.norm();
    Eigen::VectorXd fd = fd_direction(prob, st, w2, ep, d, 1e-4);
    double rel = (J * d - fd).cwiseAbs().maxCoeff() /
                 fd.cwiseAbs().maxCoeff();
    CHECK(rel < 1e-4);
    CHECK(rel < 5e-6); // measured headroom; catches silent block drift
  }
}

TEST_CASE("difference truncation decays quadratically") {
  // the analytic matrix is the h -> 0 limit: halving the step divides the
  // disagreement by ~4
  const EquilibriumProblem& prob = small_prob();
  const int nc = prob.basis()->ncoeff();
  const double w2 = 0.02, ep = 0.05;
  EquilibriumState st = prob.predictor_state(w2, ep);
  Eigen::MatrixXd J = prob.jacobian(st, w2, ep);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd d(2 * nc);
    for (int i = 0; i < 2 * nc; ++i) d[i] = gauss(rng);
    d /= d.norm();
    double err[3];
    const double hs[3] = {4e-3, 2e-3, 1e-3};
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd fd = fd_direction(prob, st, w2, ep, d, hs[k]);
      err[k] = (J * d - fd).cwiseAbs().maxCoeff() /
               fd.cwiseAbs().maxCoeff();
    }
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.125));
    CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.125));
  }
}

TEST_CASE("collocation projection is an identity") {
  CHECK(small_prob().collocation_identity_error() < 1e-13);
  CHECK(full_prob().collocation_identity_error() < 1e-10);
}

TEST_CASE("condition estimate is stable under refinement") {
  EquilibriumProblem half(params_of(16, 8));
  double c16 = half.condition_estimate(0.0, 0.0);
  double c24 = full_prob().condition_estimate(0.0, 0.0);
  CHECK(c16 > 3.0);
  CHECK(c16 < 15.0);
  CHECK(c24 > 3.0);
  CHECK(c24 < 15.0);
  CHECK(std::max(c16, c24) / std::min(c16, c24) < 2.0);
}

TEST_CASE("condition estimate grows toward the degenerate index") {
  // the mass constraint loses its grip as gamma -> 4/3: the radial probe
  // ratio must blow up monotonically along the approach
  const double gams[3] = {1.34, 1.335, 1.3334};
  double cond[3];
  for (int i = 0; i < 3; ++i) {
    EquilibriumParams par = params_of(12, 6, gams[i]);
    par.eos.allow_special_index = true;
    EquilibriumProblem prob(par);
    cond[i] = prob.condition_estimate(0.0, 0.0);
  }
  CHECK(cond[0] > 400.0);
  CHECK(cond[0] < 1200.0);
  CHECK(cond[1] > cond[0]);
  CHECK(cond[2] > cond[1]);
  CHECK(cond[2] > 10.0 * cond[0]);
  CHECK(cond[2] < 2.5e5);
}

TEST_CASE("degenerate index requires an explicit override") {
  CHECK_THROWS_WITH_AS(EquilibriumProblem(params_of(12, 6, 4.0 / 3.0)),
                       doctest::Contains("allow_special_index"),
                       std::domain_error);
}

TEST_CASE("trivial drives accept the round star without iterating") {
  SolveResult sr = small_prob().solve(0.0, 0.0);
  CHECK(sr.report.converged);
  CHECK(sr.report.iterations == 0);
  CHECK(sr.report.residual < 1e-12);
  CHECK(sr.report.history.size() == 1);
  CHECK(sr.state.zeta.coeff.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sr.state.phi.coeff.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solver contracts onto the round star from a perturbed start") {
  const EquilibriumProblem& prob = small_prob();
  const int nc = prob.basis()->ncoeff();
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  EquilibriumState start = prob.zero_state();
  Eigen::VectorXd rz(nc), rf(nc);
  for (int i = 0; i < nc; ++i) {
    rz[i] = gauss(rng);
    rf[i] = gauss(rng);
  }
  start.zeta.coeff = rz;
  start.phi.coeff = rf;
  start.zeta.coeff *= 1e-2 / start.zeta.xnorm();
  start.phi.coeff *= 1e-2 / start.phi.xnorm();

  SolveResult sr = prob.solve(0.0, 0.0, start);
  CHECK(sr.report.converged);
  CHECK(sr.report.iterations <= 8);
  CHECK(sr.report.jacobian_builds <= 1);
  CHECK(sr.state.zeta.xnorm() < 1e-8);
  CHECK(sr.state.phi.xnorm() < 1e-8);
  // fast geometric decay all the way down; the contract demands < 0.3 once
  // the residual is below 1e-3, the measured factor sits near 0.01
  for (std::size_t i = 0; i < sr.report.ratios.size(); ++i) {
    if (sr.report.history[i] < 1e-3) CHECK(sr.report.ratios[i] < 0.1);
    CHECK(sr.report.history[i + 1] < sr.report.history[i]);
  }
}

TEST_CASE("moderate-drive solution regression") {
  const EquilibriumProblem& prob = full_prob();
  SolveResult sr = prob.solve(0.02, 0.05);
  REQUIRE(sr.report.converged);
  CHECK(sr.report.iterations <= 8);
  CHECK(sr.report.iterations <= 4);
  CHECK(sr.report.jacobian_builds == 0);
  CHECK(sr.report.residual < 1e-9);
  CHECK(sr.mass_factor == doctest::Approx(0.992564977).epsilon(1e-8));

  // surface radii through the ray stretch at the outer collocation ring
  double v, ds, dmu;
  sr.state.zeta.reduced_grad(1.0, 0.0, v, ds, dmu);
  double equator = 1.0 + v;
  sr.state.zeta.reduced_grad(1.0, 1.0, v, ds, dmu);
  double pole = 1.0 + v;
  CHECK(equator == doctest::Approx(1.007351819).epsilon(1e-8));
  CHECK(pole == doctest::Approx(0.995148476).epsilon(1e-8));
  CHECK((equator - pole) / equator ==
        doctest::Approx(0.0121143).epsilon(1e-4));

  // the normalization really does hold the mass fixed: recompute the
  // deformed integral on an independent refined grid
  double M0 = prob.profile().mass;
  CHECK(std::fabs(refined_mass(prob, sr, 48, 24) - M0) / M0 < 1e-9);

  // trace bookkeeping used by the run artifacts
  CHECK(sr.report.history.size() == std::size_t(sr.report.iterations) + 1);
  CHECK(sr.report.step_norms.size() == std::size_t(sr.report.iterations));
  CHECK(sr.report.cond > 1.0);
  CHECK(sr.report.cond < 15.0);
}

TEST_CASE("sweep: trivial point, continuity, path independence, mass") {
  const EquilibriumProblem& prob = mid_prob();

  auto single = continuation_sweep(prob, {0.0}, {0.0});
  REQUIRE(single.size() == 1);
  CHECK(single[0].report.converged);
  CHECK(single[0].report.iterations == 0);
  CHECK(single[0].state.zeta.coeff.cwiseAbs().maxCoeff() == 0.0);

  const std::vector<double> ws = {0.0, 0.01, 0.02};
  const std::vector<double> es = {0.0, 0.025, 0.05};
  auto fam = continuation_sweep(prob, ws, es);
  REQUIRE(fam.size() == 9);
  double M0 = prob.profile().mass;
  for (const auto& s : fam) {
    REQUIRE(s.report.converged);
    CHECK(std::fabs(refined_mass(prob, s, 48, 24) - M0) / M0 < 1e-9);
  }

  // neighbors differ by at most the grid spacing in coefficient sup norm
  auto gap = [&](int a, int b) {
    double g = (fam[a].state.zeta.coeff - fam[b].state.zeta.coeff)
                   .cwiseAbs()
                   .maxCoeff();
    return std::max(g, (fam[a].state.phi.coeff - fam[b].state.phi.coeff)
                           .cwiseAbs()
                           .maxCoeff());
  };
  for (int io = 0; io < 3; ++io)
    for (int ie = 0; ie < 3; ++ie) {
      if (io > 0) CHECK(gap(io * 3 + ie, (io - 1) * 3 + ie) < 0.01);
      if (ie > 0) CHECK(gap(io * 3 + ie, io * 3 + ie - 1) < 0.025);
    }

  // visiting the grid in the opposite order lands on the same family
  auto famr = continuation_sweep(prob, {0.02, 0.01, 0.0}, {0.05, 0.025, 0.0});
  double worst = 0.0;
  for (int io = 0; io < 3; ++io)
    for (int ie = 0; ie < 3; ++ie) {
      const auto& a = fam[io * 3 + ie];
      const auto& b = famr[(2 - io) * 3 + (2 - ie)];
      worst = std::max(worst, (a.state.zeta.coeff - b.state.zeta.coeff)
                                  .cwiseAbs()
                                  .maxCoeff());
      worst = std::max(worst, (a.state.phi.coeff - b.state.phi.coeff)
                                  .cwiseAbs()
                                  .maxCoeff());
    }
  CHECK(worst < 1e-7);
}

TEST_CASE("first-order responses track small drives") {
  const EquilibriumProblem& prob = mid_prob();
  auto basis = prob.basis();
  const Field& z1 = prob.rotation_response();
  const Field& f1 = prob.current_response();

  // rotation response: the predictor error is quadratic in the drive, so
  // error/drive falls ~4x when the speed is halved (drive = speed squared)
  auto zerr = [&](double w2) {
    SolveResult sr = prob.solve(w2, 0.0);
    REQUIRE(sr.report.converged);
    Field d(basis, Eigen::VectorXd(sr.state.zeta.coeff - w2 * z1.coeff));
    return d.xnorm();
  };
  double ratio_z = (zerr(0.04) / 0.04) / (zerr(0.01) / 0.01);
  CHECK(ratio_z == doctest::Approx(4.0).epsilon(0.25));

  // current response: halving the coupling halves error/drive
  SolveResult s2 = prob.solve(0.0, 0.02);
  SolveResult s4 = prob.solve(0.0, 0.04);
  SolveResult s8 = prob.solve(0.0, 0.08);
  auto ferr = [&](const SolveResult& sr, double ep) {
    Field d(basis, Eigen::VectorXd(sr.state.phi.coeff - ep * f1.coeff));
    return d.xnorm();
  };
  double ratio_f = (ferr(s8, 0.08) / 0.08) / (ferr(s4, 0.04) / 0.04);
  CHECK(ratio_f == doctest::Approx(2.0).epsilon(0.25));

  // a pure magnetic drive deforms the shape only at second order
  double zn2 = s2.state.zeta.xnorm();
  double zn4 = s4.state.zeta.xnorm();
  double zn8 = s8.state.zeta.xnorm();
  CHECK(zn2 > 1e-7); // measurable, not solver noise
  CHECK(std::log2(zn4 / zn2) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(std::log2(zn8 / zn4) == doctest::Approx(2.0).epsilon(0.1));

  // degenerate drives give exactly vanishing predictors
  EquilibriumParams pz = params_of(8, 4);
  pz.current = CurrentFunction(std::vector<double>{0.0, 1.0}); // k(0) = 0
  EquilibriumProblem probz(pz);
  CHECK(probz.current_response().coeff.cwiseAbs().maxCoeff() == 0.0);
  CHECK(probz.predictor_state(0.0, 0.5).phi.coeff.cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(prob.predictor_state(0.0, 0.08).zeta.coeff.cwiseAbs().maxCoeff() ==
        0.0);
}
