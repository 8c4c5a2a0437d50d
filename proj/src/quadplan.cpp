#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "magstar/numerics.hpp"
#include "magstar/potentials.hpp"

namespace magstar {

QuadConfig quad_production() { return QuadConfig{}; }

QuadConfig quad_light() {
  QuadConfig c;
  c.panels_s = 8;
  c.panels_mu = 4;
  c.order = 4;
  c.patch_rad = 1;
  c.ladder_levels = 4;
  c.cell_order = 3;
  c.polar_rad = 2;
  c.polar_ang = 6;
  c.polar_levels = 2;
  return c;
}

QuadConfig quad_deep() {
  QuadConfig c;
  c.ladder_levels = 7;
  c.cell_order = 6;
  c.polar_rad = 4;
  c.polar_ang = 12;
  c.polar_levels = 5;
  return c;
}

std::size_t QuadPlan::nodes_in_row(int r) const {
  const TargetRow& tr = rows[r];
  if (!tr.patched) return plain.size();
  std::size_t n = tr.patch.size();
  for (const PlanNode& p : plain)
    if (!(p.s >= tr.a && p.s <= tr.b && p.mu >= tr.c && p.mu <= tr.d)) ++n;
  return n;
}

namespace {

struct Rule1D {
  std::vector<double> x, w;
};

Rule1D panel_rule(int panels, int order, double a, double b) {
  Rule1D r;
  std::vector<double> gx, gw;
  for (int i = 0; i < panels; ++i) {
    double e0 = a + (b - a) * i / panels;
    double e1 = a + (b - a) * (i + 1) / panels;
    gauss_legendre(order, e0, e1, gx, gw);
    r.x.insert(r.x.end(), gx.begin(), gx.end());
    r.w.insert(r.w.end(), gw.begin(), gw.end());
  }
  return r;
}

// geometric breakpoint ladder around x0, clipped to [lo, hi]
std::vector<double> ladder_1d(double lo, double hi, double x0, double w) {
  std::vector<double> b{lo, hi};
  for (double r = w;; r *= 2.0) {
    bool any = false;
    if (x0 - r > lo + 1e-15) {
      b.push_back(x0 - r);
      any = true;
    }
    if (x0 + r < hi - 1e-15) {
      b.push_back(x0 + r);
      any = true;
    }
    if (!any) break;
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

struct Nodes2D {
  std::vector<double> x, y, w;
  void add(double xx, double yy, double ww) {
    x.push_back(xx);
    y.push_back(yy);
    w.push_back(ww);
  }
};

// Star-centered polar rule over an axis-aligned box that contains the star
// (interior or on the boundary). Coordinates are rescaled per axis so the
// graded radial ladder tracks the true distance to the singularity.
void polar_core(double a, double b, double c, double d, double x0, double y0,
                double sx, double sy, int pr, int pt, int Lr, Nodes2D& out) {
  double ua = (a - x0) / sx, ub = (b - x0) / sx;
  double va = (c - y0) / sy, vb = (d - y0) / sy;
  double th[4] = {std::atan2(va, ua), std::atan2(va, ub), std::atan2(vb, ub),
                  std::atan2(vb, ua)};
  std::sort(th, th + 4);
  std::vector<double> tx, tw, rx, rw;
  for (int k = 0; k < 4; ++k) {
    double t0 = th[k];
    double t1 = (k < 3) ? th[k + 1] : th[0] + 2.0 * M_PI;
    if (t1 - t0 < 1e-12) continue;
    gauss_legendre(pt, t0, t1, tx, tw);
    for (int it = 0; it < pt; ++it) {
      double ct = std::cos(tx[it]), st = std::sin(tx[it]);
      double rmax = HUGE_VAL;
      if (ct > 1e-15) rmax = std::min(rmax, ub / ct);
      if (ct < -1e-15) rmax = std::min(rmax, ua / ct);
      if (st > 1e-15) rmax = std::min(rmax, vb / st);
      if (st < -1e-15) rmax = std::min(rmax, va / st);
      if (!(rmax > 1e-15) || !std::isfinite(rmax)) continue;
      std::vector<double> brk{0.0};
      for (int i = 0; i < Lr; ++i) brk.push_back(rmax * std::ldexp(1.0, i - Lr));
      brk.push_back(rmax);
      for (std::size_t i = 0; i + 1 < brk.size(); ++i) {
        gauss_legendre(pr, brk[i], brk[i + 1], rx, rw);
        for (int ir = 0; ir < pr; ++ir) {
          double rr = rx[ir];
          out.add(x0 + sx * rr * ct, y0 + sy * rr * st,
                  rw[ir] * tw[it] * rr * sx * sy);
        }
      }
    }
  }
}

// Ladder cells over rect minus the core box around the star, then the polar
// core rule inside the box. gy rescales the y ladder widths to the local
// metric so the grading is isotropic in physical distance.
void ladder_patch(double a, double b, double c, double d, double xs, double ys,
                  double w, double gy, int pc, int pr, int pt, int Lr,
                  Nodes2D& out) {
  double x0 = std::clamp(xs, a, b);
  double y0 = std::clamp(ys, c, d);
  double wx = w;
  double dxe = std::min(x0 - a, b - x0);
  if (dxe > 1e-14) wx = std::min(wx, dxe);
  double wy = w / gy;
  double dye = std::min(y0 - c, d - y0);
  if (dye > 1e-14) wy = std::min(wy, dye);
  std::vector<double> bx = ladder_1d(a, b, x0, wx);
  std::vector<double> by = ladder_1d(c, d, y0, wy);
  double c0 = std::max(a, x0 - wx), c1 = std::min(b, x0 + wx);
  double c2 = std::max(c, y0 - wy), c3 = std::min(d, y0 + wy);
  std::vector<double> gx, gw, hy, hw;
  for (std::size_t i = 0; i + 1 < bx.size(); ++i) {
    for (std::size_t j = 0; j + 1 < by.size(); ++j) {
      bool inside = bx[i] >= c0 - 1e-15 && bx[i + 1] <= c1 + 1e-15 &&
                    by[j] >= c2 - 1e-15 && by[j + 1] <= c3 + 1e-15;
      if (inside) continue;
      gauss_legendre(pc, bx[i], bx[i + 1], gx, gw);
      gauss_legendre(pc, by[j], by[j + 1], hy, hw);
      for (int ii = 0; ii < pc; ++ii)
        for (int jj = 0; jj < pc; ++jj)
          out.add(gx[ii], hy[jj], gw[ii] * hw[jj]);
    }
  }
  polar_core(c0, c1, c2, c3, x0, y0, wx, wy, pr, pt, Lr, out);
}

struct PatchRect {
  double a, b, c, d;
};

PatchRect patch_rect(const QuadConfig& cfg, double ss, double ms) {
  double hs = cfg.domain / cfg.panels_s;
  double hm = 1.0 / cfg.panels_mu;
  double Rp = cfg.patch_rad * hs;
  auto clampi = [](double v, int lo, int hi) {
    int i = (int)std::floor(v);
    return std::min(std::max(i, lo), hi);
  };
  int i0 = clampi(ss / hs - cfg.patch_rad, 0, cfg.panels_s - 1);
  int i1 = clampi(ss / hs + cfg.patch_rad, 0, cfg.panels_s - 1);
  PatchRect r;
  r.a = cfg.domain * i0 / cfg.panels_s;
  r.b = cfg.domain * (i1 + 1) / cfg.panels_s;
  if (ss <= 2.0 * Rp) {
    // near the origin the panel metric collapses: mask the full mu range
    r.c = 0.0;
    r.d = 1.0;
  } else {
    double gmu = ss / std::sqrt(std::max(1.0 - ms * ms, 1e-12));
    double dmu = Rp / gmu;
    int j0 = clampi((ms - dmu) / hm, 0, cfg.panels_mu - 1);
    int j1 = clampi((ms + dmu) / hm, 0, cfg.panels_mu - 1);
    r.c = (double)j0 / cfg.panels_mu;
    r.d = (double)(j1 + 1) / cfg.panels_mu;
  }
  return r;
}

TargetRow build_patch(const QuadConfig& cfg, double ss, double ms) {
  TargetRow row;
  row.patched = true;
  PatchRect rect = patch_rect(cfg, ss, ms);
  row.a = rect.a;
  row.b = rect.b;
  row.c = rect.c;
  row.d = rect.d;
  ss = std::clamp(ss, 0.0, cfg.domain);
  double wc = (cfg.domain / cfg.panels_s) * std::ldexp(1.0, -cfg.ladder_levels);
  Nodes2D nd;
  if (ms > cfg.mu_pole) {
    row.mode = PatchMode::pole;
    double tlo = std::sqrt(std::max(1.0 - rect.d, 0.0));
    double thi = std::sqrt(1.0 - rect.c);
    double ts = std::sqrt(std::max(1.0 - ms, 0.0));
    double gt = std::max(ss, 1e-3) * std::sqrt(2.0);
    ladder_patch(rect.a, rect.b, tlo, thi, ss, ts, wc, gt, cfg.cell_order,
                 cfg.polar_rad, cfg.polar_ang, cfg.polar_levels, nd);
    row.patch.reserve(nd.x.size());
    for (std::size_t i = 0; i < nd.x.size(); ++i) {
      double t = nd.y[i];
      row.patch.push_back({nd.x[i], 1.0 - t * t, nd.w[i] * 2.0 * t});
    }
    return row;
  }
  double gmu =
      std::max(ss, 1e-3) / std::sqrt(std::max(1.0 - ms * ms, 1e-6));
  if (rect.c <= 1e-14) {
    // the masked band touches the equator: integrate the signed-mu strip
    // with a single image instead of folding
    row.mode = PatchMode::unfold;
    ladder_patch(rect.a, rect.b, -rect.d, rect.d, ss, ms, wc, gmu,
                 cfg.cell_order, cfg.polar_rad, cfg.polar_ang,
                 cfg.polar_levels, nd);
  } else {
    row.mode = PatchMode::std_sym;
    ladder_patch(rect.a, rect.b, rect.c, rect.d, ss, ms, wc, gmu,
                 cfg.cell_order, cfg.polar_rad, cfg.polar_ang,
                 cfg.polar_levels, nd);
  }
  row.patch.reserve(nd.x.size());
  for (std::size_t i = 0; i < nd.x.size(); ++i)
    row.patch.push_back({nd.x[i], nd.y[i], nd.w[i]});
  return row;
}

} // namespace

QuadPlan make_quad_plan(const QuadConfig& cfg,
                        const std::vector<TargetSpec>& targets) {
  if (cfg.panels_s < 1 || cfg.panels_mu < 1 || cfg.order < 1 ||
      cfg.domain <= 0.0)
    throw std::invalid_argument("quadrature config out of range");
  QuadPlan plan;
  plan.cfg = cfg;
  Rule1D rs = panel_rule(cfg.panels_s, cfg.order, 0.0, cfg.domain);
  Rule1D rm = panel_rule(cfg.panels_mu, cfg.order, 0.0, 1.0);
  plan.plain.reserve(rs.x.size() * rm.x.size());
  for (std::size_t i = 0; i < rs.x.size(); ++i)
    for (std::size_t j = 0; j < rm.x.size(); ++j)
      plan.plain.push_back({rs.x[i], rm.x[j], rs.w[i] * rm.w[j]});
  plan.rows.reserve(targets.size());
  for (const TargetSpec& t : targets) {
    if (t.s_base < 0.0) {
      plan.rows.emplace_back(); // unpatched: full plain grid
    } else {
      plan.rows.push_back(build_patch(cfg, t.s_base, std::fabs(t.mu_base)));
    }
  }
  return plan;
}

} // namespace magstar
