#pragma once

#include <vector>

#include "knfp/grid.hpp"
#include "knfp/io.hpp"

namespace knfp {

// Smooth dyadic partition of unity in frequency. The gauge is either the
// scaled-dilation one, |xi|_a = |xi_x|^{1/(1+alpha)} + |xi_v| (kinetic grids),
// or the Euclidean |xi|. Level masks are functions of the gauge radius r:
//   phi_0 = h(r),  phi_j = h(2^{-j} r) - h(2^{-(j-1)} r)  (j >= 1)
// with h a C-infinity ramp, h = 1 for r <= 1 and h = 0 for r >= 2, so the
// level-j mask is supported in the annulus 2^{j-1} <= r <= 2^{j+1} and the
// masks sum to exactly 1 on the lattice once levels cover the largest radius.
class DyadicPartition {
 public:
  DyadicPartition(GridPtr grid, double alpha, bool anisotropic);

  const PhaseGrid& grid() const { return *grid_; }
  double alpha() const { return alpha_; }
  bool anisotropic() const { return aniso_; }
  int levels() const { return levels_; }

  double gauge(const int* idx) const;     // |xi|_a of a lattice mode
  double mask(int j, double r) const;     // phi_j at gauge radius r
  double mask_at(int j, std::size_t flat, const int* idx) const;

  PhaseField block(const PhaseField& f, int j) const;
  // One forward transform, then per-level masked inverses.
  std::vector<PhaseField> split(const PhaseField& f) const;
  std::vector<double> block_norms(const PhaseField& f, double p_x, double p_v) const;

 private:
  GridPtr grid_;
  double alpha_;
  bool aniso_;
  int levels_;
  std::vector<double> radius_;  // cached gauge radii (small grids only)
};

// Ramp profile h (exposed for tests).
double dyadic_ramp(double r);

// ( sum_j (2^{js} ||R_j f||_{p_x,p_v})^q )^{1/q}, sup over j when q = inf.
double besov_norm(const DyadicPartition& P, const PhaseField& f, double s,
                  double q, double p_x, double p_v);

// ||grad_x^{k1} grad_v^{k2} R_j f||_{p'} / (2^{j w} ||R_j f||_p) with the
// scaling weight w = (1+alpha)(k1 + d/p_x - d/p'_x) + (k2 + d/p_v - d/p'_v)
// on kinetic grids (Euclidean variant drops the (1+alpha) factor and merges
// blocks). Derivative orders are restricted to {0, 1}; order-1 uses the
// pointwise Euclidean magnitude of the gradient over the axis block.
// Returns 0 when the denominator block vanishes.
double bernstein_ratio(const DyadicPartition& P, const PhaseField& f, int j,
                       int k1, int k2, double px, double pv, double qx, double qv);

// sup_h ||f(.+h) - f||_inf / |h|_a^s over a lattice sample of offsets,
// s in (0,1). Offsets are exact index rolls.
double holder_seminorm(const PhaseField& f, double s, double alpha,
                       bool anisotropic);

// Exact lattice translation by whole steps (periodic).
PhaseField roll_lattice(const PhaseField& f, const std::vector<int>& steps);

// Per-level profile: rows (j, ||R_j f||_p, 2^{js} ||R_j f||_p).
io::CsvTable besov_profile(const DyadicPartition& P, const PhaseField& f,
                           double s, double p_x, double p_v);

}  // namespace knfp
