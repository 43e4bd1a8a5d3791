#pragma once

#include <cstdint>
#include <vector>

#include "knfp/grid.hpp"
#include "knfp/kernels.hpp"

namespace knfp {

enum class ParticleOrder { first, second };
enum class ForceMode { direct, binned };

// Interacting particle system on a periodic box. First order carries
// positions only; second order carries (position, velocity) pairs. Positions
// are wrapped into [-box_x/2, box_x/2); velocities are unconstrained and
// box_v is bookkeeping for density grids. rng_seed identifies the noise
// stream consumed by the NEXT step, so stepping advances it.
struct ParticleEnsemble {
  ParticleOrder order = ParticleOrder::first;
  int dim = 1;
  double box_x = 1.0;
  double box_v = 0.0;
  std::uint64_t rng_seed = 0;
  std::vector<double> x;  // N*dim, row-major per particle
  std::vector<double> v;  // N*dim for second order, else empty
  int count() const { return dim > 0 ? static_cast<int>(x.size()) / dim : 0; }
};

// n isotropic alpha-stable increments in d dimensions with characteristic
// function exp(-scale * |xi|^alpha), flattened row-major. alpha = 2 draws
// Gaussians with variance 2*scale per coordinate (the generator is the full
// Laplacian); alpha < 2 uses Chambers-Mallows-Stuck in one dimension and
// Gaussian subordination against a Kanter positive-stable draw in d >= 2.
// scale = 0 returns zeros.
std::vector<double> sample_stable(double alpha, double scale, int d, int n,
                                  std::uint64_t seed);

// n draws of the coupled pair (integral of L over [0, t], L_t), each block
// flattened n*d. alpha = 2 samples the exact Gaussian pair with covariance
// [[2t^3/3, t^2], [t^2, 2t]] per coordinate; alpha < 2 simulates the path on
// 2*substeps stable sub-increments and takes the midpoint Riemann sum.
struct StablePair {
  std::vector<double> ipart;  // time integral of the path
  std::vector<double> lpart;  // endpoint
};
StablePair sample_stable_pair(double alpha, double t, int d, int n,
                              std::uint64_t seed, int substeps = 16);

// Draw n states from a nonnegative density (categorical over lattice cells,
// uniform within a cell; negative values are clamped to zero). Kinetic
// fields produce second-order ensembles with both blocks filled.
ParticleEnsemble sample_from_field(const PhaseField& f, int n,
                                   std::uint64_t seed);

struct StepSpec {
  double alpha = 2.0;
  double dt = 0.0;
  ForceMode mode = ForceMode::direct;
  GridPtr bin_grid;        // binned mode: position grid matching dim and box
  int pair_substeps = 16;  // kinetic noise resolution for alpha < 2
};

// Mean-field drift (1/N) sum_{j != i} K_eps(X_i - X_j) at every particle,
// flattened N*dim, minimum-image displacements. Direct mode is the exact
// pairwise sum in a fixed order; binned mode deposits a cloud-in-cell
// density on bin_grid, convolves spectrally, and gathers at the particles.
// The kernel must carry cutoff_eps > 0 (raw singular kernels are never
// evaluated pairwise); the zero family needs no cutoff.
std::vector<double> ensemble_drift(const ParticleEnsemble& ens,
                                   const KernelSpec& spec,
                                   const StepSpec& step);

// One Euler-Maruyama step. First order: X += drift*dt + dL. Second order
// consumes the coupled pair: X += V*dt + I, V += drift*dt + dL, which makes
// the position update exact in law for free motion. Deterministic given
// ens.rng_seed; the returned ensemble carries the advanced seed.
ParticleEnsemble step_ensemble(const ParticleEnsemble& ens,
                               const KernelSpec& spec, const StepSpec& step);

// Lattice kernel-density estimate: cloud-in-cell deposit smoothed by a
// periodic Gaussian of width bandwidth on every axis. Total mass is exactly
// one; bandwidth must be at least the widest lattice spacing.
PhaseField empirical_density(const ParticleEnsemble& ens, const GridPtr& g,
                             double bandwidth);

// Lattice L1 distance between two fields on the same grid.
double l1_distance(const PhaseField& a, const PhaseField& b);

struct ChaosStats {
  double l1 = 0.0;
  double w1 = 0.0;  // sorted-quantile Wasserstein-1; first order, d = 1 only
};

// Distance between the ensemble's density estimate and a PDE density on the
// PDE's grid. The W1 component treats the box as a line segment, which is
// meaningful for bump-like densities away from the wrap seam.
ChaosStats chaos_distance(const ParticleEnsemble& ens, const PhaseField& pde,
                          double bandwidth);

}  // namespace knfp
