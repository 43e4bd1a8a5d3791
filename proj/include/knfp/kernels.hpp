#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "knfp/grid.hpp"

namespace knfp {

// Singular interaction kernels, represented primarily by their exact
// homogeneous Fourier symbols on the torus (zero mode gauged to zero).
enum class KernelFamily {
  // No interaction: d zero components (free-flow runs, kernel ablations).
  zero,
  // grad(|x|^{gamma-d}) normalized so the symbol is i xi |xi|^{-gamma}.
  // gamma = d is the log-potential case -x/(c_d |x|^2); gamma in (d, d+1]
  // extends to integrable forces (gamma = d+1 is the bounded sawtooth).
  riesz_grad,
  // Torus Coulomb force with neutralizing background, d = 1 only:
  //   k(x) = sgn(x) - 2x/L   <->   m(xi) = -2i/xi  (exact at every mode).
  grad_newton_1d,
  // (-x2, x1) / (2 pi |x|^2)   <->   i (xi2, -xi1)/|xi|^2, d = 2.
  biot_savart_2d,
  // (-x2, x1) / (2 pi |x|^3)   <->   i (xi2, -xi1)/|xi|, d = 2.
  sqg_riesz_2d,
  // Gradient of the order-2s Riesz potential: i xi |xi|^{-2s}, s in (0, 1].
  porous_medium,
  // Caller-supplied periodized samples, one field per component.
  grid_custom,
};

// How a kernel acting on d variables drives a kinetic phase-space density.
enum class KineticLift {
  none,        // plain convolution on a position-only grid
  x_marginal,  // H = K * (integral f dv), broadcast over velocity
  v_per_x,     // H(x, .) = K *_v f(x, .), convolution in v at each x
};

struct KernelSpec {
  KernelFamily family = KernelFamily::riesz_grad;
  double gamma = 1.0;       // riesz_grad exponent, in (0, d+1]
  double s = 1.0;           // porous_medium exponent, in (0, 1]
  double sign = 1.0;        // signed weight; +-1 in configs (repulsive vs
                            // attractive), may carry a mass factor internally
  double cutoff_eps = 0.0;  // 0 = raw kernel; > 0 caps the singular core
  KineticLift lift = KineticLift::none;
  // Non-empty = sampled representation (grid_custom, or cutoff_kernel output);
  // one row-major real field per drift component on the acting grid.
  std::vector<std::vector<double>> samples;
};

// Number of drift components the kernel produces in d space dimensions.
int kernel_components(const KernelSpec& spec, int d);

// Exact symbol at one frequency, one entry per component. The zero frequency
// maps to zero. Sampled representations are rejected (no closed symbol).
std::vector<std::complex<double>> multiplier(const KernelSpec& spec,
                                             const std::vector<double>& xi);

// Drift field H = K * u, one component per space dimension. Respects the
// spec's kinetic lift; cutoff specs convolve against the capped kernel
// (closed form for grad_newton_1d, direct in-box samples otherwise).
std::vector<PhaseField> convolve_drift(const KernelSpec& spec,
                                       const PhaseField& u);

// Pointwise force at a displacement (already minimum-imaged) for particle
// systems. Requires cutoff_eps > 0; box is the periodic edge length, which
// the jellium background of grad_newton_1d needs.
std::vector<double> kernel_force(const KernelSpec& spec, const double* dx,
                                 int d, double box);

// Sampled capped kernel on a grid: the spec's real-space form with the core
// |x| <= eps removed, evaluated directly in the centered box. eps must cover
// at least two lattice spacings. The result carries the samples and keeps
// the family tag for bookkeeping.
KernelSpec cutoff_kernel(const KernelSpec& spec, const GridPtr& g, double eps);

// Per-level block norms (j, || |R_j K| ||_p) of the kernel's grid
// representation; the pointwise Euclidean magnitude couples components.
std::vector<std::pair<int, double>> kernel_besov_profile(const KernelSpec& spec,
                                                         const GridPtr& g,
                                                         double p);

// Decay of || K - K_eps ||_{B^{beta, inf}_p} with beta = d/p - d/r as the
// cap radius shrinks. The capped force differs from the raw kernel only on
// |x| <= eps, where its size is |x|^{g-d} with g = gamma - 1; the L^r norm
// of the difference then scales like eps^{d/r - d + g}, and the Besov norm
// inherits that rate (Young with exponent 1 + 1/p = 1/q + 1/r makes the
// level bound 2^{j beta} 2^{j(d - d/q)} ||diff||_r flat in j). Requires at
// least three eps values, each resolvable on the grid.
struct CutoffRate {
  std::vector<double> eps;
  std::vector<double> norms;
  double slope = 0.0;     // fitted d log norm / d log eps
  double expected = 0.0;  // d/r - d + (gamma - 1) when valid
  bool valid = false;     // force size in (0, d) and enough eps values
};
CutoffRate cutoff_rate(const KernelSpec& spec, const GridPtr& g, double p,
                       double r, const std::vector<double>& eps_grid);

}  // namespace knfp
