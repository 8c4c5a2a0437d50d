#pragma once
#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "magstar/eos_radial.hpp"
#include "magstar/geometry.hpp"
#include "magstar/potentials.hpp"

namespace magstar {

// Polynomial current amplitude k(phi). The induction balance needs k and k';
// the Bernoulli sum needs the exact antiderivative int_0^phi k.
class CurrentFunction {
 public:
  CurrentFunction() : c_{1.0} {}
  explicit CurrentFunction(std::vector<double> coeffs);
  double operator()(double phi) const;
  double deriv(double phi) const;
  double anti(double phi) const;
  const std::vector<double>& coeffs() const { return c_; }

 private:
  std::vector<double> c_;
};

struct NewtonOptions {
  double tol = 1e-9;          // sup norm of the nodal residuals
  int max_iter = 25;
  double trust = 0.15;        // cap on the deformation step's xnorm
  double rebuild_ratio = 0.4; // chord refresh threshold
  int rebuild_budget = 3;     // refreshes allowed within one solve
  int verbose = 0;            // 1: iteration lines on stderr
};

struct EquilibriumParams {
  EquationOfState eos;
  double radius = 1.0;
  CurrentFunction current{std::vector<double>{1.0, 1.0}}; // k(phi) = 1 + phi
  int nrad = 24, nang = 12;
  NewtonOptions newton;
  int workers = 1;
};

// Unknowns of the balance system: ray deformation zeta and flux function phi,
// both as coefficient fields on the shared basis.
struct EquilibriumState {
  Field zeta, phi;
  explicit EquilibriumState(std::shared_ptr<const FieldBasis> b)
      : zeta(b), phi(std::move(b)) {}
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;       // final nodal sup norm
  std::vector<double> history; // residual at each iterate, start included
  std::vector<double> ratios;  // successive contraction factors
  std::vector<double> step_norms; // accepted deformation step per iterate
  int jacobian_builds = 0;
  double cond = 0.0; // condition estimate of the last factored matrix
};

struct SolveResult {
  NewtonReport report;
  EquilibriumState state;
  double omega2 = 0.0, eps = 0.0;
  double mass_factor = 1.0;
};

// Nodal residuals at the collocation nodes (the origin row is identically
// zero and eliminated). f1: Bernoulli balance along the deformed star with
// the fixed quadrature bias of the background removed. f2: flux consistency.
struct ResidualVectors {
  Eigen::VectorXd f1, f2;
  double mass = 1.0; // renormalization factor at this state
  double sup() const;
};

class EquilibriumProblem {
 public:
  explicit EquilibriumProblem(const EquilibriumParams& p);
  ~EquilibriumProblem();
  EquilibriumProblem(const EquilibriumProblem&) = delete;
  EquilibriumProblem& operator=(const EquilibriumProblem&) = delete;

  const EquilibriumParams& params() const;
  const RadialStarProfile& profile() const;
  const std::shared_ptr<const FieldBasis>& basis() const;
  EquilibriumState zero_state() const;

  ResidualVectors residual(const EquilibriumState& st, double omega2,
                           double eps) const;

  // dense coefficient-space jacobian of the projected residuals
  Eigen::MatrixXd jacobian(const EquilibriumState& st, double omega2,
                           double eps) const;

  // || E^-1 E - I ||_max of the collocation projection pair
  double collocation_identity_error() const;

  // sensitivity of the zero-state system matrix on smooth radially
  // symmetric probe directions; blows up on the mass-mode degeneracy
  double condition_estimate(double omega2, double eps) const;

  // first-order responses: deformation per unit omega2, flux per unit eps
  const Field& rotation_response() const;
  const Field& current_response() const;
  EquilibriumState predictor_state(double omega2, double eps) const;

  SolveResult solve(double omega2, double eps) const;
  SolveResult solve(double omega2, double eps,
                    const EquilibriumState& start) const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

// Warm-started grid of solves over the two drive parameters; result index is
// io * eps.size() + ie. Failed points carry report.converged = false.
std::vector<SolveResult> continuation_sweep(const EquilibriumProblem& prob,
                                            const std::vector<double>& omega2,
                                            const std::vector<double>& eps);

} // namespace magstar
