#include <cmath>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "magstar/linv_fd.hpp"

namespace magstar {

struct RingInverseFD::Impl {
  double domain;
  int n;
  Eigen::SparseMatrix<double> A;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  void assemble();
};

// ghost-node eliminations:
//   axis r=0:     v(-1,j) = v(1,j), and the operator limit is 4 v_rr + v_zz
//   equator z=0:  v(i,-1) = v(i,1)
//   outer edges:  dv/dn = -3 v (n.rho)/|x|, matching the |x|^-3 far field
void RingInverseFD::Impl::assemble() {
  Impl& im = *this;
  const int n = im.n, N = (n + 1) * (n + 1);
  const double h = im.domain / n, h2 = h * h;
  auto id = [n](int i, int j) { return i * (n + 1) + j; };
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * N);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double r = i * h, z = j * h;
      double diag = 0.0;
      auto add = [&](int ii, int jj, double c) {
        if (ii == i && jj == j)
          diag += c;
        else
          trip.emplace_back(id(i, j), id(ii, jj), c);
      };
      // radial part
      if (i == 0) {
        add(0, j, -8.0 / h2);
        add(1, j, 8.0 / h2);
      } else {
        double cp = 1.0 / h2 + 1.5 / (r * h);
        double cm = 1.0 / h2 - 1.5 / (r * h);
        add(i, j, -2.0 / h2);
        if (i == n) {
          double rho2 = r * r + z * z;
          add(n - 1, j, cp + cm);
          add(n, j, cp * (-6.0 * h * r / rho2));
        } else {
          add(i + 1, j, cp);
          add(i - 1, j, cm);
        }
      }
      // vertical part
      {
        double cp = 1.0 / h2, cm = 1.0 / h2;
        add(i, j, -2.0 / h2);
        if (j == 0) {
          add(i, 1, cp + cm);
        } else if (j == n) {
          double rho2 = r * r + z * z;
          add(i, n - 1, cp + cm);
          add(i, n, cp * (-6.0 * h * z / rho2));
        } else {
          add(i, j + 1, cp);
          add(i, j - 1, cm);
        }
      }
      trip.emplace_back(id(i, j), id(i, j), diag);
    }
  }
  im.A.resize(N, N);
  im.A.setFromTriplets(trip.begin(), trip.end());
  im.lu.compute(im.A);
  if (im.lu.info() != Eigen::Success)
    throw std::runtime_error("ring inverse FD factorization failed");
}

RingInverseFD::RingInverseFD(double domain, int cells)
    : impl_(new Impl{domain, cells, {}, {}}) {
  if (cells < 8 || domain <= 0.0)
    throw std::invalid_argument("ring inverse FD grid out of range");
  impl_->assemble();
}

RingInverseFD::~RingInverseFD() = default;
RingInverseFD::RingInverseFD(RingInverseFD&&) noexcept = default;
RingInverseFD& RingInverseFD::operator=(RingInverseFD&&) noexcept = default;

RingInverseFD::Solution RingInverseFD::solve(const SourceFn& f) const {
  const int n = impl_->n;
  const double h = impl_->domain / n;
  Eigen::VectorXd b((n + 1) * (n + 1));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      double r = i * h, z = j * h;
      double s = std::hypot(r, z);
      double mu = (s > 0.0) ? z / s : 0.0;
      b[i * (n + 1) + j] = f(s, mu);
    }
  }
  Eigen::VectorXd x = impl_->lu.solve(b);
  Solution sol;
  sol.domain = impl_->domain;
  sol.cells = n;
  sol.v.assign(x.data(), x.data() + x.size());
  return sol;
}

double RingInverseFD::Solution::value(double r, double z) const {
  const int n = cells;
  const double h = domain / n;
  double fi = std::min(std::max(r / h, 0.0), (double)n - 1e-12);
  double fj = std::min(std::max(z / h, 0.0), (double)n - 1e-12);
  int i = (int)fi, j = (int)fj;
  double a = fi - i, c = fj - j;
  auto at = [&](int ii, int jj) { return v[ii * (n + 1) + jj]; };
  double vv = (1 - a) * ((1 - c) * at(i, j) + c * at(i, j + 1)) +
              a * ((1 - c) * at(i + 1, j) + c * at(i + 1, j + 1));
  return r * r * vv;
}

} // namespace magstar
