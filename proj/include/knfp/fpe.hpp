#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "knfp/grid.hpp"
#include "knfp/io.hpp"
#include "knfp/kernels.hpp"

namespace knfp {

enum class SolverMode { kinetic, nondegenerate };
enum class Scheme { global_picard, exp_march };
enum class DealiasRule { two_thirds, none };

// Norm used for Picard residuals, contraction ratios, and stability quotients.
struct NormSpec {
  enum Kind { lp, mixed, besov } kind = lp;
  double p = 2.0;              // lp exponent
  double px = 2.0, pv = 2.0;   // mixed / besov integrability
  double s = 0.0, q = 1.0;     // besov smoothness / summation
};

// Monitored Besov channel; the recorded value is w(t) * ||u(t)||_{B^{s,q}_{px,pv}}
// with the time weight w(t) = (1 ^ t)^{g0/alpha} * (1 v t)^{g1/alpha}.
struct BesovChannel {
  std::string name;
  double s = 0.0, q = 1.0, px = 2.0, pv = 2.0;
  double g0 = 0.0, g1 = 0.0;
};

// Smallness diagnostic data: margin = c0 - ||u0||_{B^{su,inf}_{pu}} * |K|_{sb,pb}
// where |K|_{sb,pb} = sup_j 2^{j*sb} ||R_j K||_{pb} over the kernel's dyadic
// profile and c0 is an empirically calibrated contraction threshold (shipped
// per preset; measured by amplitude bisection on that preset's grid).
struct SmallnessSpec {
  double su = 0.0, pux = 0.0, puv = 0.0;  // data norm indices (pux = 0: unset)
  double sb = 0.0, pb = 2.0;              // kernel profile weight / integrability
  double c0 = 0.0;                        // calibrated threshold (0: unset)
};

struct SolverConfig {
  std::string name = "custom";
  SolverMode mode = SolverMode::nondegenerate;
  double alpha = 2.0;
  KernelSpec kernel;
  GridPtr grid;
  double horizon = 1.0;
  int steps = 16;
  Scheme scheme = Scheme::exp_march;
  int picard_max_iters = 24;
  double picard_tol = 1e-8;
  DealiasRule dealias = DealiasRule::two_thirds;
  NormSpec residual_norm;
  std::vector<BesovChannel> besov_channels;
  SmallnessSpec smallness;
};

// steps >= 8, picard_tol > 0, alpha in (1,2], grid/mode/kernel-lift coherence.
void validate_config(const SolverConfig& cfg);

std::uint64_t config_hash(const SolverConfig& cfg);
std::string config_to_json(const SolverConfig& cfg);
SolverConfig config_from_json(const std::string& text);

// Time-indexed solver output. channels[c][k] pairs with times[k]; fixed
// channels are mass, l1, l2, linf, min, divmin (min over the lattice of
// div_v H, the drift compression), mild (per-time normalized mild defect),
// then one channel per configured Besov monitor. Picard residual history is
// iteration-indexed and kept separate from the time series.
struct SolverRun {
  std::vector<double> times;
  std::vector<PhaseField> snapshots;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;
  std::vector<double> residual_history;   // r_n = sup_t ||u^{n+1} - u^n||
  std::vector<double> contraction_ratios; // r_{n+1} / r_n
  bool converged = false;
  bool diverged = false;  // Picard residuals grew three iterations in a row
  bool aborted = false;   // marching blow-up guard tripped
  int iterations = 0;     // Picard iterations or completed march steps
  double min_density = 0.0;
  std::string note;
  std::uint64_t config_hash = 0;
  double wall_seconds = 0.0;
};

const std::vector<double>& run_channel(const SolverRun& run, const std::string& name);
// One row per time, one column per channel (time first).
io::CsvTable monitor_table(const SolverRun& run);

double field_norm(const PhaseField& f, const NormSpec& n, double alpha);

// Flux F_a = (b*u)_a * u, the product taken pointwise in physical space after
// the dealias mask (inputs masked, product masked again: the quadratic term
// is then alias-free on the retained modes). Component a pairs with velocity
// axis a (kinetic) or axis a (nondegenerate). Non-finite drift is rejected.
std::vector<PhaseField> nonlinear_flux(const PhaseField& u, const KernelSpec& spec,
                                       DealiasRule rule);
// Spectral divergence of the flux over the velocity axes; its lattice mean is
// exactly zero, so every divergence-form step conserves mass.
PhaseField flux_divergence(const std::vector<PhaseField>& flux);

// Global fixed-point iteration of u(t) = P_t u0 - int_0^t P_{t-s} div_v F ds
// on the uniform time lattice, starting from the free flow. Stops on
// r_n <= picard_tol; three consecutive growing residuals flag divergence
// (diagnostic run, not an exception).
SolverRun picard_solve(const PhaseField& u0, const SolverConfig& cfg);

// Per-step Duhamel marching with a two-stage predictor-corrector flux
// (exponential trapezoid; second order in the step). Blow-up guard: a 10x
// one-step jump of the sup norm aborts with a diagnostic.
SolverRun march_solve(const PhaseField& u0, const SolverConfig& cfg);

// Dispatch on cfg.scheme.
SolverRun solve(const PhaseField& u0, const SolverConfig& cfg);

// sup_k || u_k - P_{t_k} u0 + Duhamel_k(div_v F(u)) ||_2 / ||u0||_2 on the
// run's own time lattice; the canonical convergence scalar.
double mild_residual(const SolverRun& run, const SolverConfig& cfg);

// Max over test functions and lattice times of the distributional identity
// defect |<u_t,phi> - <u0,phi> - int [<u, G phi> + <F, grad_v phi>]| with the
// generator G phi = Delta_v^{alpha/2} phi + v.grad_x phi applied spectrally
// and the time integral by trapezoid.
double weak_residual(const SolverRun& run, const SolverConfig& cfg,
                     const std::vector<PhaseField>& test_fns);

// c0 - ||u0|| * |K|; positive margin predicts Picard contraction. Exactly
// homogeneous in the data: scaling u0 by lambda scales the product term by
// lambda. Throws if the indices are unset.
double smallness_margin(const PhaseField& u0, const KernelSpec& spec,
                        const SolverConfig& cfg);

struct DecayFit {
  double slope = 0.0;
  double r2 = 0.0;
  int samples = 0;
};
// Log-log fit of a monitor channel over times in [t_lo, t_hi]; needs >= 5
// samples with positive values.
DecayFit decay_rate(const SolverRun& run, const std::string& channel,
                    double t_lo, double t_hi);

struct StabilityReport {
  std::vector<double> times;
  std::vector<double> ratios;  // ||uA(t) - uB(t)|| / input_distance
  double max_ratio = 0.0;
  bool exact_equal = false;    // guarded 0/0: identical runs at zero distance
};
StabilityReport stability_compare(const SolverRun& a, const SolverRun& b,
                                  double input_distance, const SolverConfig& cfg);

// Shipped configurations: nse2d (vorticity form, Biot-Savart velocity),
// sqg2d (Riesz-transform drift), vpfp1d (kinetic, screened Coulomb force on
// the position marginal), pme1d (kinetic porous-medium pressure in velocity).
SolverConfig preset_config(const std::string& name);
// Canonical initial datum of a preset; total mass = amplitude times the
// preset's calibrated base mass.
PhaseField preset_initial(const SolverConfig& cfg, double amplitude = 1.0);

}  // namespace knfp
