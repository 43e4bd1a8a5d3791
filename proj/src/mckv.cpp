#include "knfp/mckv.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <vector>

#include "knfp/util.hpp"

namespace knfp {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double wrap(double z, double box) {
  double y = std::fmod(z + 0.5 * box, box);
  if (y < 0.0) y += box;
  return y - 0.5 * box;
}

double min_image(double dz, double box) { return dz - box * std::nearbyint(dz / box); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Symmetric alpha-stable draw with characteristic function exp(-|xi|^alpha)
// (Chambers-Mallows-Stuck).
double cms_symmetric(std::mt19937_64& rng, double alpha) {
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  std::exponential_distribution<double> ee(1.0);
  double u = M_PI * (uu(rng) - 0.5);
  double e = ee(rng);
  double a = std::sin(alpha * u) / std::pow(std::cos(u), 1.0 / alpha);
  double b = std::pow(std::cos((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
  return a * b;
}

// Positive beta-stable draw with Laplace transform exp(-lambda^beta)
// (Kanter's representation), 0 < beta < 1.
double kanter_positive(std::mt19937_64& rng, double beta) {
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  std::exponential_distribution<double> ee(1.0);
  double u = M_PI * uu(rng);
  double e = ee(rng);
  double ratio = std::sin(beta * u) / std::sin(u);
  double a = std::pow(ratio, beta / (1.0 - beta)) * (std::sin((1.0 - beta) * u) / std::sin(u));
  return std::pow(a / e, (1.0 - beta) / beta);
}

// One isotropic vector with characteristic function exp(-scale |xi|^alpha).
void stable_vec(std::mt19937_64& rng, double alpha, double scale, int d, double* out) {
  if (scale == 0.0) {
    std::fill(out, out + d, 0.0);
    return;
  }
  if (alpha == 2.0) {
    std::normal_distribution<double> nn(0.0, std::sqrt(2.0 * scale));
    for (int a = 0; a < d; ++a) out[a] = nn(rng);
    return;
  }
  if (d == 1) {
    out[0] = std::pow(scale, 1.0 / alpha) * cms_symmetric(rng, alpha);
    return;
  }
  // Subordination: sqrt(2 S) N(0, I) with S positive (alpha/2)-stable gives
  // E exp(-S |xi|^2) = exp(-scale |xi|^alpha).
  double s = std::pow(scale, 2.0 / alpha) * kanter_positive(rng, 0.5 * alpha);
  std::normal_distribution<double> nn(0.0, 1.0);
  double r = std::sqrt(2.0 * s);
  for (int a = 0; a < d; ++a) out[a] = r * nn(rng);
}

struct CicStencil {
  int base[4];     // lower lattice index per axis
  double frac[4];  // interpolation fraction per axis
};

CicStencil cic_stencil(const PhaseGrid& g, const double* z) {
  CicStencil st{};
  for (int a = 0; a < g.naxes(); ++a) {
    double y = (z[a] + 0.5 * g.box(a)) / g.spacing(a);
    double fl = std::floor(y);
    st.frac[a] = y - fl;
    long i = static_cast<long>(fl) % g.shape[a];
    if (i < 0) i += g.shape[a];
    st.base[a] = static_cast<int>(i);
  }
  return st;
}

// Visit the 2^naxes cloud-in-cell corners with tensor-product weights.
template <class F>
void cic_visit(const PhaseGrid& g, const CicStencil& st, F&& f) {
  const int na = g.naxes();
  for (int corner = 0; corner < (1 << na); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < na; ++a) {
      int hi = (corner >> a) & 1;
      int i = st.base[a] + hi;
      if (i == g.shape[a]) i = 0;
      w *= hi ? st.frac[a] : 1.0 - st.frac[a];
      flat = flat * g.shape[a] + static_cast<std::size_t>(i);
    }
    f(flat, w);
  }
}

// Particle coordinates on the grid's axes: positions, then velocities.
void state_coords(const ParticleEnsemble& ens, int i, double* z) {
  for (int a = 0; a < ens.dim; ++a) z[a] = ens.x[static_cast<std::size_t>(i) * ens.dim + a];
  if (ens.order == ParticleOrder::second)
    for (int a = 0; a < ens.dim; ++a)
      z[ens.dim + a] = ens.v[static_cast<std::size_t>(i) * ens.dim + a];
}

PhaseField cic_density(const ParticleEnsemble& ens, const GridPtr& g, bool positions_only) {
  const int n = ens.count();
  require(n > 0, "density: empty ensemble");
  std::vector<double> vals(g->size, 0.0);
  const double unit = 1.0 / (n * g->cell);
  double z[4];
  for (int i = 0; i < n; ++i) {
    if (positions_only) {
      for (int a = 0; a < ens.dim; ++a) z[a] = ens.x[static_cast<std::size_t>(i) * ens.dim + a];
    } else {
      state_coords(ens, i, z);
    }
    cic_visit(*g, cic_stencil(*g, z), [&](std::size_t flat, double w) { vals[flat] += w * unit; });
  }
  return PhaseField::from_values(g, std::move(vals));
}

void check_particle_kernel(const ParticleEnsemble& ens, const KernelSpec& spec) {
  require(spec.family != KernelFamily::grid_custom, "particles: sampled kernels not supported");
  require(spec.lift != KineticLift::v_per_x, "particles: interaction acts through positions");
  if (spec.family != KernelFamily::zero)
    require(spec.cutoff_eps > 0.0, "particles: singular kernels need cutoff_eps > 0");
  require(kernel_components(spec, ens.dim) == ens.dim, "particles: kernel/dim mismatch");
}

}  // namespace

std::vector<double> sample_stable(double alpha, double scale, int d, int n,
                                  std::uint64_t seed) {
  require(alpha > 1.0 && alpha <= 2.0, "sample_stable: alpha must lie in (1, 2]");
  require(scale >= 0.0, "sample_stable: scale must be nonnegative");
  require(d >= 1 && d <= 4, "sample_stable: dimension out of range");
  require(n >= 0, "sample_stable: negative count");
  std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
  if (scale == 0.0 || n == 0) return out;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) stable_vec(rng, alpha, scale, d, out.data() + static_cast<std::size_t>(i) * d);
  return out;
}

StablePair sample_stable_pair(double alpha, double t, int d, int n,
                              std::uint64_t seed, int substeps) {
  require(alpha > 1.0 && alpha <= 2.0, "sample_stable_pair: alpha must lie in (1, 2]");
  require(t > 0.0, "sample_stable_pair: time must be positive");
  require(d >= 1 && d <= 4, "sample_stable_pair: dimension out of range");
  require(n >= 0, "sample_stable_pair: negative count");
  require(substeps >= 1, "sample_stable_pair: need at least one substep");

  StablePair pair;
  pair.ipart.assign(static_cast<std::size_t>(n) * d, 0.0);
  pair.lpart.assign(static_cast<std::size_t>(n) * d, 0.0);
  std::mt19937_64 rng(seed);

  if (alpha == 2.0) {
    // Exact Gaussian pair per coordinate: Cholesky of [[2t^3/3, t^2], [t^2, 2t]].
    std::normal_distribution<double> nn(0.0, 1.0);
    const double c11 = std::sqrt(2.0 * t * t * t / 3.0);
    const double c21 = std::sqrt(1.5 * t);
    const double c22 = std::sqrt(0.5 * t);
    for (std::size_t k = 0; k < pair.ipart.size(); ++k) {
      double z1 = nn(rng), z2 = nn(rng);
      pair.ipart[k] = c11 * z1;
      pair.lpart[k] = c21 * z1 + c22 * z2;
    }
    return pair;
  }

  // Midpoint Riemann sum on 2*substeps sub-increments: the odd partial sums
  // are the path at the midpoints of the substeps.
  const int m2 = 2 * substeps;
  const double h = t / substeps;
  const double sub_scale = t / m2;
  std::vector<double> inc(d), path(d);
  for (int i = 0; i < n; ++i) {
    std::fill(path.begin(), path.end(), 0.0);
    double* ip = pair.ipart.data() + static_cast<std::size_t>(i) * d;
    double* lp = pair.lpart.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < m2; ++j) {
      stable_vec(rng, alpha, sub_scale, d, inc.data());
      for (int a = 0; a < d; ++a) path[a] += inc[a];
      if (j % 2 == 0)
        for (int a = 0; a < d; ++a) ip[a] += h * path[a];
    }
    for (int a = 0; a < d; ++a) lp[a] = path[a];
  }
  return pair;
}

ParticleEnsemble sample_from_field(const PhaseField& f, int n, std::uint64_t seed) {
  const PhaseGrid& g = f.grid();
  require(n > 0, "sample_from_field: need a positive count");

  const std::vector<double>& vals = f.values();
  std::vector<double> cdf(vals.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    acc += std::max(vals[i], 0.0);
    cdf[i] = acc;
  }
  require(acc > 0.0, "sample_from_field: density has no positive mass");

  ParticleEnsemble ens;
  ens.order = g.kinetic ? ParticleOrder::second : ParticleOrder::first;
  ens.dim = g.dim;
  ens.box_x = g.box_x;
  ens.box_v = g.box_v;
  ens.rng_seed = splitmix64(seed);
  ens.x.assign(static_cast<std::size_t>(n) * g.dim, 0.0);
  if (ens.order == ParticleOrder::second) ens.v.assign(static_cast<std::size_t>(n) * g.dim, 0.0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  const int na = g.naxes();
  for (int i = 0; i < n; ++i) {
    double target = uu(rng) * acc;
    std::size_t flat = std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin();
    if (flat >= vals.size()) flat = vals.size() - 1;
    int idx[4];
    std::size_t rem = flat;
    for (int a = na - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % g.shape[a]);
      rem /= g.shape[a];
    }
    for (int a = 0; a < na; ++a) {
      double z = g.coord(a, idx[a]) + (uu(rng) - 0.5) * g.spacing(a);
      if (a < g.dim) {
        ens.x[static_cast<std::size_t>(i) * g.dim + a] = wrap(z, g.box_x);
      } else {
        ens.v[static_cast<std::size_t>(i) * g.dim + (a - g.dim)] = z;
      }
    }
  }
  return ens;
}

std::vector<double> ensemble_drift(const ParticleEnsemble& ens, const KernelSpec& spec,
                                   const StepSpec& step) {
  const int n = ens.count();
  const int d = ens.dim;
  require(n > 0, "drift: empty ensemble");
  std::vector<double> drift(static_cast<std::size_t>(n) * d, 0.0);
  if (spec.family == KernelFamily::zero) return drift;
  check_particle_kernel(ens, spec);

  if (step.mode == ForceMode::direct) {
    // Exact pairwise sum in index order (deterministic reduction).
    double dx[4];
    for (int i = 0; i < n; ++i) {
      const double* xi = ens.x.data() + static_cast<std::size_t>(i) * d;
      double* fi = drift.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* xj = ens.x.data() + static_cast<std::size_t>(j) * d;
        for (int a = 0; a < d; ++a) dx[a] = min_image(xi[a] - xj[a], ens.box_x);
        std::vector<double> f = kernel_force(spec, dx, d, ens.box_x);
        for (int a = 0; a < d; ++a) fi[a] += f[a];
      }
      for (int a = 0; a < d; ++a) fi[a] /= n;
    }
    return drift;
  }

  // Binned mode: cloud-in-cell density, spectral convolution, gather back.
  require(step.bin_grid != nullptr, "drift: binned mode needs a bin grid");
  const GridPtr& g = step.bin_grid;
  require(!g->kinetic && g->dim == d, "drift: bin grid must be a matching position grid");
  require(nearly_equal(g->box_x, ens.box_x, 1e-12), "drift: bin grid box mismatch");

  PhaseField rho = cic_density(ens, g, true);
  KernelSpec flat = spec;
  flat.lift = KineticLift::none;
  std::vector<PhaseField> fields = convolve_drift(flat, rho);
  std::vector<const std::vector<double>*> comp;
  comp.reserve(fields.size());
  for (const PhaseField& f : fields) comp.push_back(&f.values());

  for (int i = 0; i < n; ++i) {
    const double* xi = ens.x.data() + static_cast<std::size_t>(i) * d;
    double* fi = drift.data() + static_cast<std::size_t>(i) * d;
    cic_visit(*g, cic_stencil(*g, xi), [&](std::size_t flat_idx, double w) {
      for (int a = 0; a < d; ++a) fi[a] += w * (*comp[a])[flat_idx];
    });
  }
  return drift;
}

ParticleEnsemble step_ensemble(const ParticleEnsemble& ens, const KernelSpec& spec,
                               const StepSpec& step) {
  require(step.dt > 0.0, "step: dt must be positive");
  require(step.alpha > 1.0 && step.alpha <= 2.0, "step: alpha must lie in (1, 2]");
  const int n = ens.count();
  const int d = ens.dim;
  require(n > 0, "step: empty ensemble");

  std::vector<double> drift = ensemble_drift(ens, spec, step);

  ParticleEnsemble out = ens;
  out.rng_seed = splitmix64(ens.rng_seed);

  if (ens.order == ParticleOrder::first) {
    std::vector<double> inc = sample_stable(step.alpha, step.dt, d, n, ens.rng_seed);
    for (std::size_t k = 0; k < out.x.size(); ++k)
      out.x[k] = wrap(ens.x[k] + drift[k] * step.dt + inc[k], ens.box_x);
    return out;
  }

  // Second order: the position picks up the exact-in-law noise integral.
  StablePair pair =
      sample_stable_pair(step.alpha, step.dt, d, n, ens.rng_seed, step.pair_substeps);
  for (std::size_t k = 0; k < out.x.size(); ++k) {
    out.x[k] = wrap(ens.x[k] + ens.v[k] * step.dt + pair.ipart[k], ens.box_x);
    out.v[k] = ens.v[k] + drift[k] * step.dt + pair.lpart[k];
  }
  return out;
}

PhaseField empirical_density(const ParticleEnsemble& ens, const GridPtr& g,
                             double bandwidth) {
  if (ens.order == ParticleOrder::second) {
    require(g->kinetic && g->dim == ens.dim, "density: kinetic grid required");
  } else {
    require(!g->kinetic && g->dim == ens.dim, "density: position grid required");
  }
  double hmax = 0.0;
  for (int a = 0; a < g->naxes(); ++a) hmax = std::max(hmax, g->spacing(a));
  require(bandwidth >= hmax * (1.0 - 1e-12), "density: bandwidth below lattice spacing");

  PhaseField raw = cic_density(ens, g, false);
  std::vector<std::complex<double>> mult(g->size);
  for_each_point(*g, [&](std::size_t flat, const int* idx) {
    double q2 = 0.0;
    for (int a = 0; a < g->naxes(); ++a) {
      double xi = g->freq(a, idx[a]);
      q2 += xi * xi;
    }
    mult[flat] = std::exp(-0.5 * bandwidth * bandwidth * q2);
  });
  return multiply_spectrum(raw, mult);
}

double l1_distance(const PhaseField& a, const PhaseField& b) {
  require(a.grid().same(b.grid()), "l1_distance: grids differ");
  const std::vector<double>& av = a.values();
  const std::vector<double>& bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  return acc * a.grid().cell;
}

ChaosStats chaos_distance(const ParticleEnsemble& ens, const PhaseField& pde,
                          double bandwidth) {
  ChaosStats out;
  out.l1 = l1_distance(empirical_density(ens, pde.grid_ptr(), bandwidth), pde);
  if (ens.order != ParticleOrder::first || ens.dim != 1) return out;

  // Sorted-quantile W1 on the line: empirical midpoint ranks against the
  // piecewise-linear inverse CDF of the lattice density.
  const PhaseGrid& g = pde.grid();
  const std::vector<double>& vals = pde.values();
  std::vector<double> cdf(vals.size());
  double total = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    total += std::max(vals[i], 0.0) * g.cell;
    cdf[i] = total;
  }
  require(total > 0.0, "chaos_distance: density has no positive mass");

  std::vector<double> xs = ens.x;
  std::sort(xs.begin(), xs.end());
  const int n = static_cast<int>(xs.size());
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    double r = (k + 0.5) / n * total;
    std::size_t i = std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    if (i >= cdf.size()) i = cdf.size() - 1;
    double lo = i == 0 ? 0.0 : cdf[i - 1];
    double span = cdf[i] - lo;
    double fr = span > 0.0 ? (r - lo) / span : 0.5;
    double q = g.coord(0, static_cast<int>(i)) + (fr - 0.5) * g.spacing(0);
    acc += std::abs(xs[k] - q);
  }
  out.w1 = acc / n;
  return out;
}

}  // namespace knfp
