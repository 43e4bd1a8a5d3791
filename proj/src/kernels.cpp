#include "knfp/kernels.hpp"

#include <cmath>
#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "knfp/besov.hpp"
#include "knfp/fit.hpp"
#include "knfp/util.hpp"

namespace knfp {
namespace {

using cd = std::complex<double>;

// Constant A(d, gamma) in force_j = A x_j |x|^{gamma-d-2}, chosen so the
// symbol is exactly i xi |xi|^{-gamma}. It changes sign past gamma = d.
double riesz_force_constant(int d, double gamma) {
  if (gamma == static_cast<double>(d)) {
    // log-potential limit of (gamma - d) / c_{d,gamma}
    return -1.0 / (std::pow(2.0, d - 1) * std::pow(M_PI, 0.5 * d) *
                   std::tgamma(0.5 * d));
  }
  double c = std::pow(2.0, gamma) * std::pow(M_PI, 0.5 * d) *
             std::tgamma(0.5 * gamma) / std::tgamma(0.5 * (d - gamma));
  return (gamma - d) / c;
}

double riesz_exponent(const KernelSpec& spec) {
  return spec.family == KernelFamily::porous_medium ? 2.0 * spec.s : spec.gamma;
}

// Size exponent g of the force, |K(x)| ~ |x|^{g-d}; drives the cutoff rate.
double force_size_exponent(const KernelSpec& spec, int d) {
  switch (spec.family) {
    case KernelFamily::riesz_grad:
      return spec.gamma - 1.0;
    case KernelFamily::porous_medium:
      return 2.0 * spec.s - 1.0;
    case KernelFamily::grad_newton_1d:
      return static_cast<double>(d);  // bounded force
    case KernelFamily::biot_savart_2d:
      return 1.0;
    case KernelFamily::sqg_riesz_2d:
      return 0.0;
    case KernelFamily::zero:
    case KernelFamily::grid_custom:
      break;
  }
  return 0.0;
}

void validate_spec(const KernelSpec& spec, int d) {
  require(d == 1 || d == 2, "kernels: kernels act in one or two dimensions");
  switch (spec.family) {
    case KernelFamily::zero:
      break;
    case KernelFamily::riesz_grad:
      require(spec.gamma > 0.0 && spec.gamma <= d + 1.0,
              "kernels: riesz_grad needs gamma in (0, d+1]");
      break;
    case KernelFamily::porous_medium:
      require(spec.s > 0.0 && spec.s <= 1.0,
              "kernels: porous_medium needs s in (0, 1]");
      break;
    case KernelFamily::grad_newton_1d:
      require(d == 1, "kernels: grad_newton_1d acts in one dimension");
      break;
    case KernelFamily::biot_savart_2d:
    case KernelFamily::sqg_riesz_2d:
      require(d == 2, "kernels: this family acts in two dimensions");
      break;
    case KernelFamily::grid_custom:
      require(!spec.samples.empty(), "kernels: grid_custom needs samples");
      break;
  }
  // Symbols are linear in sign, so any nonzero weight is admissible; configs
  // restrict it to +-1 at parse time, but callers may fold a mass factor in.
  require(spec.sign != 0.0 && std::isfinite(spec.sign),
          "kernels: sign must be a nonzero finite weight");
  require(spec.cutoff_eps >= 0.0, "kernels: cutoff_eps must be nonnegative");
}

// Exact homogeneous symbol at a nonzero frequency; callers gauge the zero
// mode and Nyquist rows to zero.
void symbol_at(const KernelSpec& spec, const double* xi, int d, cd* out) {
  const cd I(0.0, 1.0);
  switch (spec.family) {
    case KernelFamily::zero:
      for (int a = 0; a < d; ++a) out[a] = cd(0.0, 0.0);
      break;
    case KernelFamily::riesz_grad:
    case KernelFamily::porous_medium: {
      double g = riesz_exponent(spec);
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) r2 += xi[a] * xi[a];
      double w = spec.sign * std::pow(r2, -0.5 * g);
      for (int a = 0; a < d; ++a) out[a] = I * (w * xi[a]);
      break;
    }
    case KernelFamily::grad_newton_1d: {
      double c = spec.cutoff_eps > 0.0 ? std::cos(xi[0] * spec.cutoff_eps) : 1.0;
      out[0] = I * (spec.sign * -2.0 * c / xi[0]);
      break;
    }
    case KernelFamily::biot_savart_2d:
    case KernelFamily::sqg_riesz_2d: {
      double r2 = xi[0] * xi[0] + xi[1] * xi[1];
      double w = spec.family == KernelFamily::biot_savart_2d
                     ? 1.0 / r2
                     : 1.0 / std::sqrt(r2);
      out[0] = I * (spec.sign * w * xi[1]);
      out[1] = I * (spec.sign * -w * xi[0]);
      break;
    }
    case KernelFamily::grid_custom:
      require(false, "kernels: sampled kernels have no closed symbol");
  }
}

// Capped real-space force at a centered displacement; odd, zero on the
// removed core |x| <= eps and at the origin.
void force_at(const KernelSpec& spec, const double* x, int d, double box,
              double eps, double* out) {
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
  double r = std::sqrt(r2);
  for (int a = 0; a < d; ++a) out[a] = 0.0;
  switch (spec.family) {
    case KernelFamily::zero:
      return;
    case KernelFamily::riesz_grad:
    case KernelFamily::porous_medium: {
      if (r <= eps || r == 0.0) return;
      double g = riesz_exponent(spec);
      double w = spec.sign * riesz_force_constant(d, g) * std::pow(r, g - d - 2.0);
      for (int a = 0; a < d; ++a) out[a] = w * x[a];
      return;
    }
    case KernelFamily::grad_newton_1d: {
      double s = (r > eps) ? (x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0)) : 0.0;
      out[0] = spec.sign * (s - 2.0 * x[0] / box);
      return;
    }
    case KernelFamily::biot_savart_2d:
    case KernelFamily::sqg_riesz_2d: {
      if (r <= eps || r == 0.0) return;
      double den = 2.0 * M_PI * (spec.family == KernelFamily::biot_savart_2d
                                     ? r2
                                     : r2 * r);
      out[0] = spec.sign * -x[1] / den;
      out[1] = spec.sign * x[0] / den;
      return;
    }
    case KernelFamily::grid_custom:
      require(false, "kernels: sampled kernels have no pointwise form");
  }
}

std::vector<std::vector<double>> sample_force(const KernelSpec& spec,
                                              const PhaseGrid& g, double eps) {
  const int d = g.dim;
  const int nc = kernel_components(spec, d);
  std::vector<std::vector<double>> fields(nc, std::vector<double>(g.size, 0.0));
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    double x[2] = {0.0, 0.0}, f[2] = {0.0, 0.0};
    for (int a = 0; a < d; ++a) x[a] = g.coord(a, idx[a]);
    force_at(spec, x, d, g.box_x, eps, f);
    for (int c = 0; c < nc; ++c) fields[c][flat] = f[c];
  });
  return fields;
}

// Per-component symbol tables on the acting (position-only) grid. Sampled
// representations transform their samples; analytic families evaluate the
// closed symbol mode by mode, with Nyquist rows zeroed (odd symbols).
std::vector<std::vector<cd>> multiplier_table(const KernelSpec& spec,
                                              const GridPtr& g) {
  require(!g->kinetic, "kernels: symbol tables live on the acting grid");
  validate_spec(spec, g->dim);
  const int d = g->dim;
  const int nc = kernel_components(spec, d);
  if (!spec.samples.empty()) {
    std::vector<std::vector<cd>> t;
    t.reserve(nc);
    for (const auto& s : spec.samples) {
      require(s.size() == g->size, "kernels: sample size must match the grid");
      PhaseField k = PhaseField::from_values(g, s);
      const auto& ks = k.spectrum();
      std::vector<cd> tc(g->size);
      for (std::size_t i = 0; i < g->size; ++i) tc[i] = g->volume * ks[i];
      t.push_back(std::move(tc));
    }
    return t;
  }
  if (spec.cutoff_eps > 0.0 && spec.family != KernelFamily::grad_newton_1d)
    return multiplier_table(cutoff_kernel(spec, g, spec.cutoff_eps), g);
  std::vector<std::vector<cd>> t(nc, std::vector<cd>(g->size, cd(0.0, 0.0)));
  for_each_point(*g, [&](std::size_t flat, const int* idx) {
    double xi[2] = {0.0, 0.0};
    double r2 = 0.0;
    bool nyquist = false;
    for (int a = 0; a < d; ++a) {
      if (2 * g->kindex(a, idx[a]) == -g->shape[a]) nyquist = true;
      xi[a] = g->freq(a, idx[a]);
      r2 += xi[a] * xi[a];
    }
    if (nyquist || r2 == 0.0) return;
    cd out[2];
    symbol_at(spec, xi, d, out);
    for (int c = 0; c < nc; ++c) t[c][flat] = out[c];
  });
  return t;
}

std::vector<PhaseField> apply_tables(const GridPtr& g,
                                     const std::vector<std::vector<cd>>& t,
                                     const std::vector<cd>& spectrum) {
  std::vector<PhaseField> out;
  out.reserve(t.size());
  for (const auto& tc : t) {
    std::vector<cd> s(g->size);
    for (std::size_t i = 0; i < g->size; ++i) s[i] = spectrum[i] * tc[i];
    out.push_back(PhaseField::from_spectrum(g, std::move(s)));
  }
  return out;
}

// || |R_j K| ||_p with the pointwise Euclidean magnitude over components.
double magnitude_block_norm(const DyadicPartition& P,
                            const std::vector<PhaseField>& comps, int j,
                            double p) {
  const GridPtr& g = comps.front().grid_ptr();
  std::vector<double> mag(g->size, 0.0);
  for (const auto& c : comps) {
    PhaseField b = P.block(c, j);
    const auto& v = b.values();
    for (std::size_t i = 0; i < g->size; ++i) mag[i] += v[i] * v[i];
  }
  for (auto& m : mag) m = std::sqrt(m);
  return lp_norm(PhaseField::from_values(g, std::move(mag)), p);
}

std::vector<PhaseField> fields_from_samples(
    const GridPtr& g, const std::vector<std::vector<double>>& samples) {
  std::vector<PhaseField> comps;
  comps.reserve(samples.size());
  for (const auto& s : samples) comps.push_back(PhaseField::from_values(g, s));
  return comps;
}

}  // namespace

int kernel_components(const KernelSpec& spec, int d) {
  switch (spec.family) {
    case KernelFamily::grad_newton_1d:
      return 1;
    case KernelFamily::biot_savart_2d:
    case KernelFamily::sqg_riesz_2d:
      return 2;
    case KernelFamily::grid_custom:
      return static_cast<int>(spec.samples.size());
    default:
      return d;
  }
}

std::vector<cd> multiplier(const KernelSpec& spec,
                           const std::vector<double>& xi) {
  const int d = static_cast<int>(xi.size());
  validate_spec(spec, d);
  require(spec.family != KernelFamily::grid_custom && spec.samples.empty(),
          "kernels: sampled kernels have no closed symbol");
  require(spec.cutoff_eps == 0.0 || spec.family == KernelFamily::grad_newton_1d,
          "kernels: only the torus coulomb cap has a closed symbol");
  std::vector<cd> out(kernel_components(spec, d), cd(0.0, 0.0));
  double r2 = 0.0;
  for (double x : xi) r2 += x * x;
  if (r2 == 0.0) return out;
  symbol_at(spec, xi.data(), d, out.data());
  return out;
}

std::vector<PhaseField> convolve_drift(const KernelSpec& spec,
                                       const PhaseField& u) {
  require(!u.empty(), "kernels: empty density");
  const GridPtr& g = u.grid_ptr();
  if (spec.family == KernelFamily::zero)
    return std::vector<PhaseField>(g->dim, PhaseField::zero(g));
  if (spec.lift == KineticLift::none) {
    require(!g->kinetic, "kernels: a kinetic density needs an explicit lift");
    auto t = multiplier_table(spec, g);
    require(static_cast<int>(t.size()) == g->dim,
            "kernels: drift components must match the dimension");
    return apply_tables(g, t, u.spectrum());
  }
  require(g->kinetic, "kernels: kinetic lifts need a kinetic grid");
  if (spec.lift == KineticLift::x_marginal) {
    PhaseField rho = velocity_marginal(u);
    const GridPtr& pg = rho.grid_ptr();
    auto t = multiplier_table(spec, pg);
    require(static_cast<int>(t.size()) == pg->dim,
            "kernels: drift components must match the dimension");
    std::vector<PhaseField> H;
    H.reserve(t.size());
    for (auto& comp : apply_tables(pg, t, rho.spectrum()))
      H.push_back(lift_to_phase(comp, g));
    return H;
  }
  // v_per_x: multiply each position slice's velocity spectrum
  GridPtr vg = make_grid(g->dim, false, g->nv, g->box_v);
  auto t = multiplier_table(spec, vg);
  require(static_cast<int>(t.size()) == g->dim,
          "kernels: drift components must match the dimension");
  const auto& us = u.spectrum();
  const int d = g->dim, nv = g->nv;
  std::vector<PhaseField> H;
  H.reserve(t.size());
  for (const auto& tc : t) {
    std::vector<cd> s(g->size);
    for_each_point(*g, [&](std::size_t flat, const int* idx) {
      std::size_t fv = 0;
      for (int a = 0; a < d; ++a) fv = fv * nv + idx[d + a];
      s[flat] = us[flat] * tc[fv];
    });
    H.push_back(PhaseField::from_spectrum(g, std::move(s)));
  }
  return H;
}

std::vector<double> kernel_force(const KernelSpec& spec, const double* dx,
                                 int d, double box) {
  validate_spec(spec, d);
  require(spec.family != KernelFamily::grid_custom,
          "kernels: sampled kernels have no pointwise force");
  require(spec.cutoff_eps > 0.0,
          "kernels: particle forces need a positive cap radius");
  require(box > 0.0, "kernels: box must be positive");
  std::vector<double> f(kernel_components(spec, d), 0.0);
  force_at(spec, dx, d, box, spec.cutoff_eps, f.data());
  return f;
}

KernelSpec cutoff_kernel(const KernelSpec& spec, const GridPtr& g, double eps) {
  require(!g->kinetic, "kernels: sample the cap on the acting grid");
  validate_spec(spec, g->dim);
  require(spec.family != KernelFamily::grid_custom && spec.samples.empty(),
          "kernels: the kernel is already sampled");
  double h = 0.0;
  for (int a = 0; a < g->naxes(); ++a) h = std::max(h, g->spacing(a));
  require(eps >= 2.0 * h,
          "kernels: the cap must cover at least two lattice spacings");
  KernelSpec out = spec;
  out.cutoff_eps = eps;
  out.samples = sample_force(spec, *g, eps);
  return out;
}

std::vector<std::pair<int, double>> kernel_besov_profile(const KernelSpec& spec,
                                                         const GridPtr& g,
                                                         double p) {
  require(!g->kinetic, "kernels: profiles live on the acting grid");
  validate_spec(spec, g->dim);
  auto t = multiplier_table(spec, g);
  std::vector<PhaseField> comps;
  comps.reserve(t.size());
  for (const auto& tc : t) {
    // kernel field: stored coefficients are symbol / volume
    std::vector<cd> s(g->size);
    for (std::size_t i = 0; i < g->size; ++i) s[i] = tc[i] / g->volume;
    comps.push_back(PhaseField::from_spectrum(g, std::move(s)));
  }
  DyadicPartition P(g, 2.0, false);
  std::vector<std::pair<int, double>> rows;
  rows.reserve(P.levels());
  for (int j = 0; j < P.levels(); ++j)
    rows.emplace_back(j, magnitude_block_norm(P, comps, j, p));
  return rows;
}

CutoffRate cutoff_rate(const KernelSpec& spec, const GridPtr& g, double p,
                       double r, const std::vector<double>& eps_grid) {
  require(!g->kinetic, "kernels: rates are measured on the acting grid");
  validate_spec(spec, g->dim);
  require(spec.family != KernelFamily::grid_custom && spec.samples.empty(),
          "kernels: rates need an analytic family");
  require(p >= 1.0, "kernels: p must be >= 1");
  require(std::isfinite(r) && r >= 1.0, "kernels: r must be finite and >= 1");
  require(eps_grid.size() >= 3, "kernels: need at least three cap radii");
  const int d = g->dim;
  const double beta = (std::isinf(p) ? 0.0 : d / p) - d / r;
  auto raw = sample_force(spec, *g, 0.0);
  DyadicPartition P(g, 2.0, false);
  CutoffRate out;
  for (double eps : eps_grid) {
    KernelSpec cut = cutoff_kernel(spec, g, eps);
    auto diff = cut.samples;
    for (std::size_t c = 0; c < diff.size(); ++c)
      for (std::size_t i = 0; i < diff[c].size(); ++i)
        diff[c][i] = raw[c][i] - diff[c][i];
    auto comps = fields_from_samples(g, diff);
    double norm = 0.0;
    for (int j = 0; j < P.levels(); ++j)
      norm = std::max(norm, std::pow(2.0, j * beta) *
                                magnitude_block_norm(P, comps, j, p));
    out.eps.push_back(eps);
    out.norms.push_back(norm);
  }
  double gf = force_size_exponent(spec, d);
  out.expected = d / r - d + gf;
  out.slope = fit_loglog(out.eps, out.norms).slope;
  out.valid = gf > 0.0 && gf < static_cast<double>(d);
  return out;
}

}  // namespace knfp
