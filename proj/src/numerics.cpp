#include "magstar/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace magstar {

void elliptic_ke(double m, double mc, double& K, double& E) {
  if (!(m >= 0.0) || !(mc > 0.0))
    throw std::domain_error("elliptic_ke: need m >= 0 and 1-m > 0");
  // AGM with the c_n^2 accumulation for E (Abramowitz-Stegun 17.6).
  double a = 1.0, b = std::sqrt(mc);
  double csum = 0.5 * m; // 2^{-1} c_0^2, c_0^2 = m
  double pow2 = 0.5;
  for (int it = 0; it < 60; ++it) {
    double c = 0.5 * (a - b);
    if (std::abs(c) < 1e-17 * a) break;
    double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    pow2 *= 2.0;
    csum += pow2 * c * c;
  }
  K = M_PI / (2.0 * a);
  E = K * (1.0 - csum);
}

double elliptic_k(double m) {
  double K, E;
  elliptic_ke(m, 1.0 - m, K, E);
  return K;
}

double elliptic_dk(double m, double mc, double K, double E) {
  if (m < 1e-10) return M_PI / 8.0; // series limit
  return (E - mc * K) / (2.0 * m * mc);
}

double elliptic_de(double m, double K, double E) {
  if (m < 1e-10) return -M_PI / 8.0;
  return (E - K) / (2.0 * m);
}

namespace {

// Taylor coefficients of Hhat about x = 0:
// Hhat(x) = (pi/2) * sum_{j>=0} b_{j+2} x^j,
// b_n = (2 + 2/(2n-1)) a_n - a_{n-1},  a_n = ((2n-1)!!/(2n)!!)^2.
struct RingSeries {
  static constexpr int N = 16;
  double c[N];
  RingSeries() {
    double a = 0.25; // a_1; loop entry holds a_{n-1}
    for (int n = 2; n < N + 2; ++n) {
      double r = (2.0 * n - 1.0) / (2.0 * n);
      double an = a * r * r;
      c[n - 2] = (2.0 + 2.0 / (2.0 * n - 1.0)) * an - a;
      a = an;
    }
  }
};
const RingSeries ring_series;

constexpr double kSeriesCut = 0.05;

} // namespace

double ring_profile_ke(double x, double K, double E) {
  if (x < kSeriesCut) {
    double acc = 0.0;
    for (int j = RingSeries::N - 1; j >= 0; --j) acc = acc * x + ring_series.c[j];
    return 0.5 * M_PI * acc;
  }
  return ((2.0 - x) * K - 2.0 * E) / (x * x);
}

double ring_profile_deriv_ke(double x, double xc, double K, double E) {
  if (x < kSeriesCut) {
    double acc = 0.0;
    for (int j = RingSeries::N - 1; j >= 1; --j)
      acc = acc * x + j * ring_series.c[j];
    return 0.5 * M_PI * acc;
  }
  double dK = elliptic_dk(x, xc, K, E);
  double dE = elliptic_de(x, K, E);
  double h = (2.0 - x) * K - 2.0 * E;
  double dh = (2.0 - x) * dK - K - 2.0 * dE;
  return dh / (x * x) - 2.0 * h / (x * x * x);
}

double ring_profile(double x, double xc) {
  double K = 0.0, E = 0.0;
  if (x >= kSeriesCut) elliptic_ke(x, xc, K, E);
  return ring_profile_ke(x, K, E);
}

double ring_profile_deriv(double x, double xc) {
  double K = 0.0, E = 0.0;
  if (x >= kSeriesCut) elliptic_ke(x, xc, K, E);
  return ring_profile_deriv_ke(x, xc, K, E);
}

namespace {

// P_n(x) and P_n'(x) by recurrence.
void legendre_pair(int n, double x, double& P, double& dP) {
  double p0 = 1.0, p1 = x;
  if (n == 0) { P = 1.0; dP = 0.0; return; }
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  P = p1;
  dP = n * (x * p1 - p0) / (x * x - 1.0);
}

} // namespace

void gauss_legendre(int n, double a, double b, std::vector<double>& x,
                    std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi-style initial guess, then Newton.
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double P, dP;
    for (int it = 0; it < 100; ++it) {
      legendre_pair(n, z, P, dP);
      double dz = P / dP;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    legendre_pair(n, z, P, dP);
    double wi = 2.0 / ((1.0 - z * z) * dP * dP);
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    x[i] = mid + half * x[i];
    w[i] *= half;
  }
}

void gauss_radau_right(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw std::invalid_argument("gauss_radau_right: n >= 1");
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  if (n == 1) { x[0] = 1.0; w[0] = 1.0; return; }
  // Left-Radau on [-1,1]: endpoint -1 plus the n-1 roots of P_{n-1} + P_n.
  // Mirror afterwards so the fixed node sits at +1.
  int ni = n - 1;
  std::vector<double> xi(ni);
  // Bracket roots of f(t) = P_{n-1}(t) + P_n(t) on (-1, 1).
  auto f = [&](double t) {
    double P1, d1, P2, d2;
    legendre_pair(n - 1, t, P1, d1);
    legendre_pair(n, t, P2, d2);
    return P1 + P2;
  };
  auto fp = [&](double t) {
    double P1, d1, P2, d2;
    legendre_pair(n - 1, t, P1, d1);
    legendre_pair(n, t, P2, d2);
    return d1 + d2;
  };
  const int grid = 40 * n;
  double prev_t = -1.0 + 1e-12, prev_f = f(prev_t);
  int found = 0;
  for (int g = 1; g <= grid && found < ni; ++g) {
    double t = -1.0 + 2.0 * g / grid;
    if (g == grid) t = 1.0 - 1e-12;
    double ft = f(t);
    if (prev_f == 0.0) { xi[found++] = prev_t; }
    else if (prev_f * ft < 0.0) {
      double lo = prev_t, hi = t;
      for (int it = 0; it < 80; ++it) {
        double midp = 0.5 * (lo + hi);
        double fm = f(midp);
        if (prev_f * fm <= 0.0) hi = midp; else lo = midp;
      }
      double r = 0.5 * (lo + hi);
      for (int it = 0; it < 8; ++it) {
        double d = f(r) / fp(r);
        if (std::abs(d) < 1e-16) break;
        r -= d;
        r = std::clamp(r, lo - 1e-9, hi + 1e-9);
      }
      xi[found++] = r;
    }
    prev_t = t;
    prev_f = ft;
  }
  if (found != ni) throw std::runtime_error("gauss_radau_right: root bracketing failed");
  // Weights for left-Radau: w_end = 2/n^2; w_i = (1-t_i)/(n^2 P_{n-1}(t_i)^2).
  // After mirroring t -> -t the interior weight formula uses (1+t).
  // Map [-1,1] -> [0,1].
  x[n - 1] = 1.0;
  w[n - 1] = (2.0 / (n * n)) * 0.5;
  std::vector<std::pair<double, double>> nodes;
  for (int i = 0; i < ni; ++i) {
    double t = xi[i];
    double P1, d1;
    legendre_pair(n - 1, t, P1, d1);
    double wi = (1.0 - t) / (n * n * P1 * P1);
    double tm = -t; // mirrored
    nodes.push_back({0.5 * (tm + 1.0), wi * 0.5});
  }
  std::sort(nodes.begin(), nodes.end());
  for (int i = 0; i < ni; ++i) { x[i] = nodes[i].first; w[i] = nodes[i].second; }
}

void legendre_all(int lmax, double x, double* P, double* dP) {
  P[0] = 1.0;
  if (dP) dP[0] = 0.0;
  if (lmax == 0) return;
  P[1] = x;
  if (dP) dP[1] = 1.0;
  for (int l = 2; l <= lmax; ++l)
    P[l] = ((2.0 * l - 1.0) * x * P[l - 1] - (l - 1.0) * P[l - 2]) / l;
  if (dP)
    for (int l = 2; l <= lmax; ++l)
      dP[l] = l * P[l - 1] + x * dP[l - 1];
}

void chebyshev_shifted_all(int mmax, double s, double* T, double* dT) {
  double t = 2.0 * s - 1.0;
  T[0] = 1.0;
  if (dT) dT[0] = 0.0;
  if (mmax == 0) return;
  T[1] = t;
  if (dT) dT[1] = 2.0;
  double U0 = 1.0, U1 = 2.0 * t; // Chebyshev U for derivatives
  for (int m = 2; m <= mmax; ++m) {
    T[m] = 2.0 * t * T[m - 1] - T[m - 2];
    if (dT) {
      double U2 = 2.0 * t * U1 - U0;
      dT[m] = 2.0 * m * U1; // dT_m/ds = 2 m U_{m-1}(t)
      U0 = U1;
      U1 = U2;
    }
  }
}

double polyval(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * t + c[i];
  return acc;
}

double polyval_deriv(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 1;) acc = acc * t + static_cast<double>(i) * c[i];
  return acc;
}

double polyval_anti(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * t + c[i] / static_cast<double>(i + 1);
  return acc * t;
}

double HermiteTable::value(double x) const {
  std::size_t n = f.size();
  double u = (x - x0) / dx;
  if (u <= 0.0) return f.front();
  if (u >= static_cast<double>(n - 1)) return f.back();
  std::size_t i = static_cast<std::size_t>(u);
  double t = u - static_cast<double>(i);
  double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
  double h10 = t * (1 - t) * (1 - t);
  double h01 = t * t * (3 - 2 * t);
  double h11 = t * t * (t - 1);
  return h00 * f[i] + h10 * dx * df[i] + h01 * f[i + 1] + h11 * dx * df[i + 1];
}

double HermiteTable::deriv(double x) const {
  std::size_t n = f.size();
  double u = (x - x0) / dx;
  if (u <= 0.0) return df.front();
  if (u >= static_cast<double>(n - 1)) return df.back();
  std::size_t i = static_cast<std::size_t>(u);
  double t = u - static_cast<double>(i);
  double g00 = 6 * t * (t - 1) / dx;
  double g10 = (1 - t) * (1 - 3 * t);
  double g01 = -g00;
  double g11 = t * (3 * t - 2);
  return g00 * f[i] + g10 * df[i] + g01 * f[i + 1] + g11 * df[i + 1];
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (workers < 1) workers = 1;
  std::size_t w = std::min<std::size_t>(workers, n);
  if (w <= 1 || n == 0) {
    if (n) body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + w - 1) / w;
  for (std::size_t k = 0; k < w; ++k) {
    std::size_t lo = k * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

} // namespace magstar
