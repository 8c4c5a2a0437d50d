#pragma once
#include <memory>
#include <vector>

#include "magstar/potentials.hpp"

namespace magstar {

// Finite-difference route to the magnetic inverse, independent of the ring
// kernels: solve v_rr + 3 v_r / r + v_zz = f on [0, d]^2 with axis and
// equator symmetry and a decay Robin condition on the outer edges, then
// report u = r^2 v. Second order in the grid spacing.
class RingInverseFD {
 public:
  RingInverseFD(double domain, int cells);
  ~RingInverseFD();
  RingInverseFD(RingInverseFD&&) noexcept;
  RingInverseFD& operator=(RingInverseFD&&) noexcept;

  struct Solution {
    double domain = 0;
    int cells = 0;
    std::vector<double> v; // (cells+1)^2 nodal values, r-major
    double value(double r, double z) const; // u = r^2 v, bilinear
  };

  // f in base polar convention: f(s, mu), s = |x|, mu = z/s
  Solution solve(const SourceFn& f) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace magstar
