#include <cmath>
#include <stdexcept>

#include "magstar/numerics.hpp"
#include "magstar/potentials.hpp"

namespace magstar {

KernelVals kernel_single(double pT, double q, double dz, KernelGrads* g) {
  double sp = pT + q, sm = pT - q;
  double S = sp * sp + dz * dz;
  double Sc = sm * sm + dz * dz; // = S*(1-x), exact, no cancellation
  double x = 4.0 * pT * q / S;
  double xc = Sc / S;
  double K, E;
  elliptic_ke(x, xc, K, E);
  double rS = std::sqrt(S);
  KernelVals v;
  v.grav = 4.0 * K / rS;
  v.ring = 32.0 * M_PI * ring_profile_ke(x, K, E) / (S * rS);
  if (g) {
    double dK = elliptic_dk(x, xc, K, E);
    double dH = ring_profile_deriv_ke(x, xc, K, E);
    double dS_dp = 2.0 * sp; // dS/dq is the same
    double dS_dz = 2.0 * dz;
    // stable forms: the naive (4q - 2x sp)/S cancels catastrophically for
    // near-coincident rings; dz^2 -+ sm*sp is exact there
    double dzsm = dz * dz - sm * sp;
    double dzsp = dz * dz + sm * sp;
    double dx_dp = 4.0 * q * dzsm / (S * S);
    double dx_dq = 4.0 * pT * dzsp / (S * S);
    double dx_dz = -8.0 * pT * q * dz / (S * S);
    double cg = 4.0 / rS;
    g->grav_dp = cg * dK * dx_dp - 0.5 * v.grav * dS_dp / S;
    g->grav_dq = cg * dK * dx_dq - 0.5 * v.grav * dS_dp / S;
    g->grav_ddz = cg * dK * dx_dz - 0.5 * v.grav * dS_dz / S;
    double cr = 32.0 * M_PI / (S * rS);
    g->ring_dp = cr * dH * dx_dp - 1.5 * v.ring * dS_dp / S;
    g->ring_dq = cr * dH * dx_dq - 1.5 * v.ring * dS_dp / S;
    g->ring_ddz = cr * dH * dx_dz - 1.5 * v.ring * dS_dz / S;
  }
  return v;
}

double kernel_single_grav(double pT, double q, double dz) {
  double sp = pT + q;
  double S = sp * sp + dz * dz;
  double x = 4.0 * pT * q / S;
  return 4.0 * elliptic_k(x) / std::sqrt(S);
}

double kernel_pair_grav(double pT, double zT, double q, double y) {
  return kernel_single_grav(pT, q, zT - y) + kernel_single_grav(pT, q, zT + y);
}

PairVals kernel_pair(double pT, double zT, double q, double y, PairGrads* g) {
  if (!g) {
    KernelVals a = kernel_single(pT, q, zT - y);
    KernelVals b = kernel_single(pT, q, zT + y);
    return {a.grav + b.grav, a.ring + b.ring};
  }
  KernelGrads ga, gb;
  KernelVals a = kernel_single(pT, q, zT - y, &ga);
  KernelVals b = kernel_single(pT, q, zT + y, &gb);
  g->grav_dpT = ga.grav_dp + gb.grav_dp;
  g->grav_dzT = ga.grav_ddz + gb.grav_ddz;
  g->grav_dq = ga.grav_dq + gb.grav_dq;
  g->grav_dy = -ga.grav_ddz + gb.grav_ddz;
  g->ring_dpT = ga.ring_dp + gb.ring_dp;
  g->ring_dzT = ga.ring_ddz + gb.ring_ddz;
  g->ring_dq = ga.ring_dq + gb.ring_dq;
  g->ring_dy = -ga.ring_ddz + gb.ring_ddz;
  return {a.grav + b.grav, a.ring + b.ring};
}

namespace {

// one quadrature node turned into a deformed source sample
struct SrcNode {
  double q, y; // deformed cylindrical source coordinates (y signed)
  double f3;   // gravity integrand weight: w s^2 f det3
  double f5;   // ring integrand weight:    w s^4 (1-mu^2) f det5
};

SrcNode make_src(const PlanNode& n, const SourceFn& f, const Field* zeta) {
  double muab = std::fabs(n.mu);
  double lam = 1.0, det3 = 1.0, det5 = 1.0;
  if (zeta) {
    RayStretch rs = ray_stretch(*zeta, n.s, muab);
    lam = rs.lam;
    det3 = deformation_det3(rs, n.s);
    det5 = deformation_det5(rs, n.s);
  }
  double m2 = std::max(1.0 - n.mu * n.mu, 0.0);
  double fv = f(n.s, muab);
  SrcNode sn;
  sn.q = lam * n.s * std::sqrt(m2);
  sn.y = lam * n.s * n.mu;
  double s2 = n.s * n.s;
  sn.f3 = n.w * s2 * fv * det3;
  sn.f5 = n.w * s2 * s2 * m2 * fv * det5;
  return sn;
}

// Shared sweep for all four evaluator entry points. Output vectors that are
// non-null get filled per target row; node order is fixed, so sums do not
// depend on the worker count.
void sweep_all(const QuadPlan& plan, const std::vector<EvalTarget>& tg,
               const SourceFn& f, const Field* zeta, int workers,
               std::vector<double>* uval,
               std::vector<std::array<double, 2>>* ugrad,
               std::vector<double>* rval,
               std::vector<std::array<double, 2>>* rgrad) {
  if (tg.size() != plan.rows.size())
    throw std::invalid_argument("target count does not match plan rows");
  const bool wantg = ugrad || rgrad;
  std::vector<SrcNode> plainsrc(plan.plain.size());
  for (std::size_t i = 0; i < plan.plain.size(); ++i)
    plainsrc[i] = make_src(plan.plain[i], f, zeta);
  auto body = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      const TargetRow& tr = plan.rows[r];
      double pT = tg[r].p, zT = tg[r].z;
      double au = 0, ar = 0, aup = 0, auz = 0, arp = 0, arz = 0;
      auto acc = [&](const SrcNode& sn, bool sym) {
        if (!wantg) {
          if (sym) {
            PairVals v = kernel_pair(pT, zT, sn.q, sn.y);
            au += sn.f3 * v.grav;
            ar += sn.f5 * v.ring;
          } else {
            KernelVals v = kernel_single(pT, sn.q, zT - sn.y);
            au += sn.f3 * v.grav;
            ar += sn.f5 * v.ring;
          }
          return;
        }
        if (sym) {
          PairGrads pg;
          PairVals v = kernel_pair(pT, zT, sn.q, sn.y, &pg);
          au += sn.f3 * v.grav;
          ar += sn.f5 * v.ring;
          aup += sn.f3 * pg.grav_dpT;
          auz += sn.f3 * pg.grav_dzT;
          arp += sn.f5 * pg.ring_dpT;
          arz += sn.f5 * pg.ring_dzT;
        } else {
          KernelGrads kg;
          KernelVals v = kernel_single(pT, sn.q, zT - sn.y, &kg);
          au += sn.f3 * v.grav;
          ar += sn.f5 * v.ring;
          aup += sn.f3 * kg.grav_dp;
          auz += sn.f3 * kg.grav_ddz;
          arp += sn.f5 * kg.ring_dp;
          arz += sn.f5 * kg.ring_ddz;
        }
      };
      if (!tr.patched) {
        for (const SrcNode& sn : plainsrc) acc(sn, true);
      } else {
        for (std::size_t i = 0; i < plainsrc.size(); ++i) {
          const PlanNode& n = plan.plain[i];
          if (!(n.s >= tr.a && n.s <= tr.b && n.mu >= tr.c && n.mu <= tr.d))
            acc(plainsrc[i], true);
        }
        const bool sym = tr.mode != PatchMode::unfold;
        for (const PlanNode& n : tr.patch) acc(make_src(n, f, zeta), sym);
      }
      if (uval) (*uval)[r] = au;
      if (ugrad) (*ugrad)[r] = {aup, auz};
      if (rval) (*rval)[r] = ar;
      if (rgrad) (*rgrad)[r] = {arp, arz};
    }
  };
  parallel_for(tg.size(), workers, body);
}

} // namespace

std::vector<double> gravity_potential(const QuadPlan& plan,
                                      const std::vector<EvalTarget>& targets,
                                      const SourceFn& f, const Field* zeta) {
  std::vector<double> u(targets.size());
  sweep_all(plan, targets, f, zeta, 1, &u, nullptr, nullptr, nullptr);
  return u;
}

std::vector<std::array<double, 2>> gravity_potential_grad(
    const QuadPlan& plan, const std::vector<EvalTarget>& targets,
    const SourceFn& f, const Field* zeta) {
  std::vector<std::array<double, 2>> g(targets.size());
  sweep_all(plan, targets, f, zeta, 1, nullptr, &g, nullptr, nullptr);
  return g;
}

std::vector<double> ring_potential(const QuadPlan& plan,
                                   const std::vector<EvalTarget>& targets,
                                   const SourceFn& f, const Field* zeta) {
  std::vector<double> r(targets.size());
  sweep_all(plan, targets, f, zeta, 1, nullptr, nullptr, &r, nullptr);
  return r;
}

std::vector<double> flux_potential(const QuadPlan& plan,
                                   const std::vector<EvalTarget>& targets,
                                   const SourceFn& f, const Field* zeta) {
  std::vector<double> r(targets.size());
  sweep_all(plan, targets, f, zeta, 1, nullptr, nullptr, &r, nullptr);
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] *= kC5 * targets[i].p * targets[i].p;
  return r;
}

std::vector<std::array<double, 2>> flux_potential_grad(
    const QuadPlan& plan, const std::vector<EvalTarget>& targets,
    const SourceFn& f, const Field* zeta) {
  std::vector<double> r(targets.size());
  std::vector<std::array<double, 2>> g(targets.size());
  sweep_all(plan, targets, f, zeta, 1, nullptr, nullptr, &r, &g);
  for (std::size_t i = 0; i < r.size(); ++i) {
    double p = targets[i].p;
    // d/dp of C5 p^2 L1 picks up the dressing term
    g[i][0] = kC5 * (p * p * g[i][0] + 2.0 * p * r[i]);
    g[i][1] = kC5 * p * p * g[i][1];
  }
  return g;
}

double ring_kernel_quadrature(double p, double q, double dz) {
  // alpha integral of sin^2 over the S^3 slice; distance via half-angle form
  // so the near-coincident case keeps full precision
  double b = (p - q) * (p - q) + dz * dz;
  double fpq = 4.0 * p * q;
  std::vector<double> gx, gw;
  double acc = 0.0;
  double hi = M_PI;
  for (int j = 0; j <= 60; ++j) {
    double lo = (j == 60) ? 0.0 : hi * 0.5;
    gauss_legendre(20, lo, hi, gx, gw);
    for (int i = 0; i < 20; ++i) {
      double sh = std::sin(0.5 * gx[i]);
      double D = b + fpq * sh * sh;
      double sa = std::sin(gx[i]);
      acc += gw[i] * sa * sa / (D * std::sqrt(D));
    }
    hi = lo;
  }
  return 4.0 * M_PI * acc;
}

} // namespace magstar
