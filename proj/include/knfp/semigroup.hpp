#pragma once

#include <map>
#include <vector>

#include "knfp/besov.hpp"
#include "knfp/fit.hpp"
#include "knfp/grid.hpp"

namespace knfp {

// Exponent of the free kinetic symbol, E(xi, t) = int_0^t |xi_v - s xi_x|^alpha ds,
// d components per frequency block. Dispatches to the alpha = 2 cubic
//   t|xi_v|^2 - t^2 xi_v.xi_x + (t^3/3)|xi_x|^2,
// to the exact power-law antiderivative when xi_v is parallel to xi_x, and to
// adaptive Gauss-Legendre quadrature otherwise.
double symbol_exponent(double alpha, double t, const double* xi_x,
                       const double* xi_v, int d);

// Pure quadrature path (no closed forms): panels split at the minimizer of
// |xi_v - s xi_x|, bisected until the relative error estimate <= rel_tol.
double symbol_exponent_quadrature(double alpha, double t, const double* xi_x,
                                  const double* xi_v, int d,
                                  double rel_tol = 1e-10);

// Free propagator on a grid. Kinetic grids: multiply the spectrum by
// exp(-E(xi, t)), then shear by t; this conserves mass exactly and satisfies
// the two-parameter semigroup law. Nondegenerate grids: exp(-t |xi|^alpha).
// Multiplier arrays are cached per time value.
class Semigroup {
 public:
  Semigroup(GridPtr grid, double alpha);

  const PhaseGrid& grid() const { return *grid_; }
  double alpha() const { return alpha_; }
  PhaseField apply(const PhaseField& f, double t) const;
  const std::vector<double>& multiplier(double t) const;

 private:
  GridPtr grid_;
  double alpha_;
  mutable std::map<double, std::vector<double>> cache_;
};

PhaseField kinetic_apply(const PhaseField& f, double alpha, double t);
PhaseField isotropic_apply(const PhaseField& f, double alpha, double t);

// Trapezoid Duhamel sum over equispaced nodes s_k = k t / (m-1):
//   sum_k w_k P_{t - s_k} flux[k],  w = h * (1/2, 1, ..., 1, 1/2).
PhaseField duhamel(const Semigroup& S, const std::vector<PhaseField>& flux, double t);

// Log-log decay fit of t -> ||P_t f0||_{B^{s,1}_p} over the given times.
struct SlopeReport {
  std::vector<double> times;
  std::vector<double> norms;
  double slope = 0.0;
  double r2 = 0.0;
};

SlopeReport smoothing_slope(const Semigroup& S, const DyadicPartition& P,
                            const PhaseField& f0, double s, double p_x,
                            double p_v, const std::vector<double>& times);

}  // namespace knfp
