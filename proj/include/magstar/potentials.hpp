#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "magstar/geometry.hpp"

namespace magstar {

// Composite-panel quadrature with per-target singular patches. A patch
// replaces the masked panels around the target's base point by symmetric
// geometrically graded ladders plus a star-centered polar core, which
// regularizes the logarithmic kernel singularity (and the 1/d one of its
// gradient). Equator targets unfold the reflection image exactly; near-axis
// targets switch to t = sqrt(1 - mu).
struct QuadConfig {
  int panels_s = 12, panels_mu = 6, order = 6;
  int patch_rad = 2;    // masked panel radius around the base point
  int ladder_levels = 6;
  int cell_order = 5;   // tensor Gauss order on ladder cells
  int polar_rad = 3, polar_ang = 10, polar_levels = 4;
  double mu_pole = 0.995;
  double domain = 1.0;  // radial extent of the source box
};

// calibrated presets: residual rows, finite-difference jacobian columns,
// and field evaluation / diagnostics
QuadConfig quad_production();
QuadConfig quad_light();
QuadConfig quad_deep();

struct TargetSpec {
  double s_base = -1.0; // patch center radius; negative = no patch
  double mu_base = 0.0;
};

enum class PatchMode : std::uint8_t { std_sym, unfold, pole };

struct PlanNode {
  double s;  // base radius
  double mu; // signed in unfold rows; field values use |mu|
  double w;  // 2D weight, all coordinate transforms folded in
};

struct TargetRow {
  bool patched = false;
  PatchMode mode = PatchMode::std_sym;
  double a = 0, b = 0, c = 0, d = 0; // masked (s, mu) rectangle
  std::vector<PlanNode> patch;
};

struct QuadPlan {
  QuadConfig cfg;
  std::vector<PlanNode> plain; // shared tensor panels, mu > 0
  std::vector<TargetRow> rows;
  std::size_t nodes_in_row(int r) const;
};

QuadPlan make_quad_plan(const QuadConfig& cfg,
                        const std::vector<TargetSpec>& targets);

// Iterate one row's nodes: masked plain nodes are skipped, patch nodes
// appended. body(node, symmetric): symmetric nodes add the mirror image of
// the source ring; unfold rows carry signed mu and a single image.
template <class Body>
inline void plan_for_each(const QuadPlan& plan, int row, Body&& body) {
  const TargetRow& tr = plan.rows[row];
  if (!tr.patched) {
    for (const PlanNode& n : plan.plain) body(n, true);
    return;
  }
  for (const PlanNode& n : plan.plain)
    if (!(n.s >= tr.a && n.s <= tr.b && n.mu >= tr.c && n.mu <= tr.d))
      body(n, true);
  const bool sym = tr.mode != PatchMode::unfold;
  for (const PlanNode& n : tr.patch) body(n, sym);
}

// Fused ring kernels for one source image. Both are azimuthal reductions of
// Green kernels over the ring through (q, y): the gravitational one of
// 1/|x - y| in 3D and the magnetic one of |x - y|^{-3} in 5D. They share
// S = (pT+q)^2 + dz^2 and the elliptic modulus x = 4 pT q / S, so one AGM
// pass serves both. dz = zT - y.
struct KernelGrads {
  double grav_dp, grav_dq, grav_ddz;   // d/dpT, d/dq, d/d(dz)
  double ring_dp, ring_dq, ring_ddz;
};
struct KernelVals {
  double grav, ring;
};
KernelVals kernel_single(double pT, double q, double dz,
                         KernelGrads* g = nullptr);

// value-only gravitational kernels (one AGM pass for K alone); these keep
// differencing loops off the ring-profile work they do not need
double kernel_single_grav(double pT, double q, double dz);
double kernel_pair_grav(double pT, double zT, double q, double y);

// symmetrized source images at +-y (even sources)
struct PairGrads {
  double grav_dpT, grav_dzT, grav_dq, grav_dy;
  double ring_dpT, ring_dzT, ring_dq, ring_dy;
};
struct PairVals {
  double grav, ring;
};
PairVals kernel_pair(double pT, double zT, double q, double y,
                     PairGrads* g = nullptr);

// --- generic evaluators (test oracles, diagnostics, predictors) ---

// axisymmetric even source in base coordinates, mu >= 0
using SourceFn = std::function<double(double s, double mu)>;

struct EvalTarget {
  double p = 0, z = 0;
};

// Newtonian potential of the (optionally deformed) source:
//   U(T) = int f(x) det Dg(x) / |T - g(x)| dx over the base ball
std::vector<double> gravity_potential(const QuadPlan& plan,
                                      const std::vector<EvalTarget>& targets,
                                      const SourceFn& f, const Field* zeta);
std::vector<std::array<double, 2>> gravity_potential_grad(
    const QuadPlan& plan, const std::vector<EvalTarget>& targets,
    const SourceFn& f, const Field* zeta);

// Raw five-dimensional inverse (the L1 integral): ring-kernel action on the
// extended source, deformation pulled back to base coordinates.
std::vector<double> ring_potential(const QuadPlan& plan,
                                   const std::vector<EvalTarget>& targets,
                                   const SourceFn& f, const Field* zeta);

// The magnetic inverse C5 pT^2 * L1[f](T); C5 = -1/(8 pi^2).
std::vector<double> flux_potential(const QuadPlan& plan,
                                   const std::vector<EvalTarget>& targets,
                                   const SourceFn& f, const Field* zeta);
std::vector<std::array<double, 2>> flux_potential_grad(
    const QuadPlan& plan, const std::vector<EvalTarget>& targets,
    const SourceFn& f, const Field* zeta);

inline constexpr double kC5 = -1.0 / (8.0 * M_PI * M_PI);

// Reference single-kernel integrator: adaptive-order composite Gauss panels
// over the ring angle. Independent oracle for kernel_single's ring part.
double ring_kernel_quadrature(double p, double q, double dz);

} // namespace magstar
