#include "knfp/grid.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "knfp/fft.hpp"

namespace knfp {

PhaseGrid::PhaseGrid(int dim_, bool kinetic_, int nx_, double box_x_, int nv_,
                     double box_v_)
    : dim(dim_), kinetic(kinetic_), nx(nx_), nv(nv_), box_x(box_x_), box_v(box_v_) {
  require(dim == 1 || dim == 2, "grid: dim must be 1 or 2");
  require(is_pow2(nx) && nx >= 8, "grid: nx must be a power of two >= 8");
  require(box_x > 0.0, "grid: box_x must be positive");
  if (kinetic) {
    require(is_pow2(nv) && nv >= 8, "grid: nv must be a power of two >= 8");
    require(box_v > 0.0, "grid: box_v must be positive");
  } else {
    nv = 0;
    box_v = 0.0;
  }
  for (int a = 0; a < dim; ++a) shape.push_back(nx);
  if (kinetic)
    for (int a = 0; a < dim; ++a) shape.push_back(nv);
  size = 1;
  cell = 1.0;
  volume = 1.0;
  for (int a = 0; a < naxes(); ++a) {
    size *= static_cast<std::size_t>(shape[a]);
    cell *= spacing(a);
    volume *= box(a);
  }
}

bool PhaseGrid::same(const PhaseGrid& o) const {
  return dim == o.dim && kinetic == o.kinetic && nx == o.nx && nv == o.nv &&
         box_x == o.box_x && box_v == o.box_v;
}

GridPtr make_grid(int dim, bool kinetic, int nx, double box_x, int nv, double box_v) {
  return std::make_shared<PhaseGrid>(dim, kinetic, nx, box_x, nv, box_v);
}

GridPtr position_grid(const PhaseGrid& g) {
  require(g.kinetic, "position_grid: grid is already position-only");
  return make_grid(g.dim, false, g.nx, g.box_x);
}

namespace {

// Parity of the raw index sum; the centered-box phase per axis is (-1)^k.
int index_parity(const PhaseGrid& g, const int* idx) {
  int s = 0;
  for (int a = 0; a < g.naxes(); ++a) s += idx[a];
  return s & 1;
}

std::vector<int> all_axes(const PhaseGrid& g) {
  std::vector<int> ax(g.naxes());
  std::iota(ax.begin(), ax.end(), 0);
  return ax;
}

}  // namespace

PhaseField PhaseField::from_values(GridPtr g, std::vector<double> v) {
  require(g != nullptr, "field: null grid");
  require(v.size() == g->size, "field: value count does not match grid");
  PhaseField f;
  f.grid_ = std::move(g);
  f.vals_ = std::move(v);
  f.has_vals_ = true;
  return f;
}

PhaseField PhaseField::from_spectrum(GridPtr g, std::vector<std::complex<double>> s) {
  require(g != nullptr, "field: null grid");
  require(s.size() == g->size, "field: mode count does not match grid");
  PhaseField f;
  f.grid_ = std::move(g);
  f.spec_ = std::move(s);
  f.has_spec_ = true;
  return f;
}

PhaseField PhaseField::zero(GridPtr g) {
  require(g != nullptr, "field: null grid");
  return from_values(std::move(g), std::vector<double>(g ? g->size : 0, 0.0));
}

void PhaseField::ensure_values() const {
  if (has_vals_) return;
  require(has_spec_, "field: empty");
  const PhaseGrid& g = *grid_;
  std::vector<std::complex<double>> buf(g.size);
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    buf[flat] = index_parity(g, idx) ? -spec_[flat] : spec_[flat];
  });
  fft::transform(buf.data(), g.shape, all_axes(g), +1);
  vals_.resize(g.size);
  for (std::size_t i = 0; i < g.size; ++i) vals_[i] = buf[i].real();
  has_vals_ = true;
}

void PhaseField::ensure_spectrum() const {
  if (has_spec_) return;
  require(has_vals_, "field: empty");
  const PhaseGrid& g = *grid_;
  std::vector<std::complex<double>> buf(g.size);
  for (std::size_t i = 0; i < g.size; ++i) buf[i] = vals_[i];
  fft::transform(buf.data(), g.shape, all_axes(g), -1);
  const double inv_n = 1.0 / static_cast<double>(g.size);
  spec_.resize(g.size);
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    spec_[flat] = (index_parity(g, idx) ? -inv_n : inv_n) * buf[flat];
  });
  has_spec_ = true;
}

const std::vector<double>& PhaseField::values() const {
  ensure_values();
  return vals_;
}

const std::vector<std::complex<double>>& PhaseField::spectrum() const {
  ensure_spectrum();
  return spec_;
}

PhaseField to_spectral(const PhaseField& f) {
  PhaseField g = f;
  g.spectrum();
  return g;
}

namespace {

void check_same_grid(const PhaseField& a, const PhaseField& b, const char* op) {
  require(!a.empty() && !b.empty(), std::string(op) + ": empty field");
  require(a.grid().same(b.grid()), std::string(op) + ": grid mismatch");
}

}  // namespace

double mixed_lp_norm(const PhaseField& f, double p_x, double p_v) {
  require(!f.empty(), "mixed_lp_norm: empty field");
  require(p_x >= 1.0 && p_v >= 1.0, "mixed_lp_norm: p must be >= 1 (or inf)");
  const PhaseGrid& g = f.grid();
  const std::vector<double>& v = f.values();

  if (!g.kinetic) {
    if (p_x == kInf) {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    }
    double s = 0.0;
    for (double x : v) s += std::pow(std::abs(x), p_x);
    return std::pow(s * g.cell, 1.0 / p_x);
  }

  std::size_t n_v = 1, n_x = 1;
  for (int a = 0; a < g.naxes(); ++a)
    (g.is_velocity_axis(a) ? n_v : n_x) *= static_cast<std::size_t>(g.shape[a]);
  double cell_x = 1.0, cell_v = 1.0;
  for (int a = 0; a < g.naxes(); ++a)
    (g.is_velocity_axis(a) ? cell_v : cell_x) *= g.spacing(a);

  // Velocity axes are fastest, so the inner position reduction strides by n_v.
  std::vector<double> inner(n_v, 0.0);
  if (p_x == kInf) {
    for (std::size_t xf = 0; xf < n_x; ++xf) {
      const double* row = v.data() + xf * n_v;
      for (std::size_t vf = 0; vf < n_v; ++vf)
        inner[vf] = std::max(inner[vf], std::abs(row[vf]));
    }
  } else if (p_x == 2.0) {
    for (std::size_t xf = 0; xf < n_x; ++xf) {
      const double* row = v.data() + xf * n_v;
      for (std::size_t vf = 0; vf < n_v; ++vf) inner[vf] += row[vf] * row[vf];
    }
  } else if (p_x == 1.0) {
    for (std::size_t xf = 0; xf < n_x; ++xf) {
      const double* row = v.data() + xf * n_v;
      for (std::size_t vf = 0; vf < n_v; ++vf) inner[vf] += std::abs(row[vf]);
    }
  } else {
    for (std::size_t xf = 0; xf < n_x; ++xf) {
      const double* row = v.data() + xf * n_v;
      for (std::size_t vf = 0; vf < n_v; ++vf)
        inner[vf] += std::pow(std::abs(row[vf]), p_x);
    }
  }
  if (p_x != kInf) {
    for (double& w : inner) w = std::pow(w * cell_x, 1.0 / p_x);
  }

  if (p_v == kInf) {
    double m = 0.0;
    for (double w : inner) m = std::max(m, w);
    return m;
  }
  double s = 0.0;
  for (double w : inner) s += std::pow(w, p_v);
  return std::pow(s * cell_v, 1.0 / p_v);
}

double lp_norm(const PhaseField& f, double p) { return mixed_lp_norm(f, p, p); }

double total_mass(const PhaseField& f) {
  require(!f.empty(), "total_mass: empty field");
  const std::vector<double>& v = f.values();
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  return s * f.grid().cell;
}

PhaseField shear(const PhaseField& f, double t) {
  require(!f.empty(), "shear: empty field");
  const PhaseGrid& g = f.grid();
  require(g.kinetic, "shear: requires a kinetic grid");
  const std::vector<double>& v = f.values();
  std::vector<std::complex<double>> buf(g.size);
  for (std::size_t i = 0; i < g.size; ++i) buf[i] = v[i];

  std::vector<int> x_axes(g.dim);
  std::iota(x_axes.begin(), x_axes.end(), 0);
  fft::transform(buf.data(), g.shape, x_axes, -1);

  std::size_t n_x = 1;
  for (int a = 0; a < g.dim; ++a) n_x *= static_cast<std::size_t>(g.shape[a]);
  const double inv_nx = 1.0 / static_cast<double>(n_x);

  // The modulation is origin-independent: raw x-spectrum times exp(-i t v.xi).
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    double phase = 0.0;
    for (int a = 0; a < g.dim; ++a)
      phase += g.coord(g.dim + a, idx[g.dim + a]) * g.freq(a, idx[a]);
    buf[flat] *= std::polar(inv_nx, -t * phase);
  });

  fft::transform(buf.data(), g.shape, x_axes, +1);
  std::vector<double> out(g.size);
  for (std::size_t i = 0; i < g.size; ++i) out[i] = buf[i].real();
  return PhaseField::from_values(f.grid_ptr(), std::move(out));
}

PhaseField derivative(const PhaseField& f, int axis, int order) {
  require(!f.empty(), "derivative: empty field");
  const PhaseGrid& g = f.grid();
  require(axis >= 0 && axis < g.naxes(), "derivative: axis out of range");
  require(order >= 1, "derivative: order must be >= 1");
  const std::vector<std::complex<double>>& s = f.spectrum();
  std::vector<std::complex<double>> out(g.size);
  const int n = g.shape[axis];
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    // Nyquist has no conjugate partner; odd derivatives zero it to stay real.
    if ((order & 1) && idx[axis] == n / 2) {
      out[flat] = 0.0;
      return;
    }
    std::complex<double> m = std::pow(std::complex<double>(0.0, g.freq(axis, idx[axis])),
                                      order);
    out[flat] = m * s[flat];
  });
  return PhaseField::from_spectrum(f.grid_ptr(), std::move(out));
}

PhaseField add(const PhaseField& a, const PhaseField& b) {
  check_same_grid(a, b, "add");
  std::vector<double> out = a.values();
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return PhaseField::from_values(a.grid_ptr(), std::move(out));
}

PhaseField sub(const PhaseField& a, const PhaseField& b) {
  check_same_grid(a, b, "sub");
  std::vector<double> out = a.values();
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return PhaseField::from_values(a.grid_ptr(), std::move(out));
}

PhaseField scale(const PhaseField& a, double c) {
  require(!a.empty(), "scale: empty field");
  std::vector<double> out = a.values();
  for (double& x : out) x *= c;
  return PhaseField::from_values(a.grid_ptr(), std::move(out));
}

PhaseField axpy(const PhaseField& a, double c, const PhaseField& b) {
  check_same_grid(a, b, "axpy");
  std::vector<double> out = a.values();
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * bv[i];
  return PhaseField::from_values(a.grid_ptr(), std::move(out));
}

PhaseField multiply(const PhaseField& a, const PhaseField& b) {
  check_same_grid(a, b, "multiply");
  std::vector<double> out = a.values();
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return PhaseField::from_values(a.grid_ptr(), std::move(out));
}

PhaseField multiply_spectrum(const PhaseField& f,
                             const std::vector<std::complex<double>>& m) {
  require(!f.empty(), "multiply_spectrum: empty field");
  require(m.size() == f.grid().size, "multiply_spectrum: size mismatch");
  const std::vector<std::complex<double>>& s = f.spectrum();
  std::vector<std::complex<double>> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * m[i];
  return PhaseField::from_spectrum(f.grid_ptr(), std::move(out));
}

PhaseField convolve(const PhaseField& a, const PhaseField& b) {
  check_same_grid(a, b, "convolve");
  const std::vector<std::complex<double>>& sa = a.spectrum();
  const std::vector<std::complex<double>>& sb = b.spectrum();
  std::vector<std::complex<double>> out(sa.size());
  const double vol = a.grid().volume;
  for (std::size_t i = 0; i < sa.size(); ++i) out[i] = vol * sa[i] * sb[i];
  return PhaseField::from_spectrum(a.grid_ptr(), std::move(out));
}

PhaseField dealias(const PhaseField& f) {
  require(!f.empty(), "dealias: empty field");
  const PhaseGrid& g = f.grid();
  const std::vector<std::complex<double>>& s = f.spectrum();
  std::vector<std::complex<double>> out(s.size());
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    bool keep = true;
    for (int a = 0; a < g.naxes(); ++a) {
      if (std::abs(g.kindex(a, idx[a])) > g.shape[a] / 3) {
        keep = false;
        break;
      }
    }
    out[flat] = keep ? s[flat] : 0.0;
  });
  return PhaseField::from_spectrum(f.grid_ptr(), std::move(out));
}

bool is_dealiased(const PhaseField& f) {
  require(!f.empty(), "is_dealiased: empty field");
  const PhaseGrid& g = f.grid();
  const std::vector<std::complex<double>>& s = f.spectrum();
  bool ok = true;
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    for (int a = 0; a < g.naxes(); ++a) {
      if (std::abs(g.kindex(a, idx[a])) > g.shape[a] / 3 &&
          std::abs(s[flat]) > 1e-14) {
        ok = false;
      }
    }
  });
  return ok;
}

PhaseField velocity_marginal(const PhaseField& f) {
  require(!f.empty(), "velocity_marginal: empty field");
  const PhaseGrid& g = f.grid();
  require(g.kinetic, "velocity_marginal: requires a kinetic grid");
  GridPtr gx = position_grid(g);
  std::size_t n_v = 1;
  for (int a = g.dim; a < g.naxes(); ++a) n_v *= static_cast<std::size_t>(g.shape[a]);
  double cell_v = 1.0;
  for (int a = g.dim; a < g.naxes(); ++a) cell_v *= g.spacing(a);
  const std::vector<double>& v = f.values();
  std::vector<double> out(gx->size, 0.0);
  for (std::size_t xf = 0; xf < gx->size; ++xf) {
    const double* row = v.data() + xf * n_v;
    double s = 0.0;
    for (std::size_t vf = 0; vf < n_v; ++vf) s += row[vf];
    out[xf] = s * cell_v;
  }
  return PhaseField::from_values(gx, std::move(out));
}

PhaseField lift_to_phase(const PhaseField& fx, GridPtr kg) {
  require(!fx.empty(), "lift_to_phase: empty field");
  require(kg && kg->kinetic, "lift_to_phase: target must be kinetic");
  const PhaseGrid& gx = fx.grid();
  require(!gx.kinetic && gx.dim == kg->dim && gx.nx == kg->nx && gx.box_x == kg->box_x,
          "lift_to_phase: position grids do not match");
  std::size_t n_v = 1;
  for (int a = kg->dim; a < kg->naxes(); ++a)
    n_v *= static_cast<std::size_t>(kg->shape[a]);
  const std::vector<double>& v = fx.values();
  std::vector<double> out(kg->size);
  for (std::size_t xf = 0; xf < gx.size; ++xf)
    std::fill_n(out.begin() + xf * n_v, n_v, v[xf]);
  return PhaseField::from_values(std::move(kg), std::move(out));
}

PhaseField gaussian(GridPtr g, const std::vector<double>& center,
                    const std::vector<double>& sigma, double amp) {
  require(g != nullptr, "gaussian: null grid");
  const int na = g->naxes();
  require(static_cast<int>(center.size()) == na && static_cast<int>(sigma.size()) == na,
          "gaussian: center/sigma must have one entry per axis");
  for (double s : sigma) require(s > 0.0, "gaussian: sigma must be positive");
  std::vector<double> out(g->size);
  for_each_point(*g, [&](std::size_t flat, const int* idx) {
    double e = 0.0;
    for (int a = 0; a < na; ++a) {
      double d = g->coord(a, idx[a]) - center[a];
      e += d * d / (2.0 * sigma[a] * sigma[a]);
    }
    out[flat] = amp * std::exp(-e);
  });
  return PhaseField::from_values(std::move(g), std::move(out));
}

PhaseField random_band_limited(GridPtr g, int kmax, std::uint64_t seed, bool zero_mean) {
  require(g != nullptr, "random_band_limited: null grid");
  require(kmax >= 1, "random_band_limited: kmax must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> white(g->size);
  for (double& x : white) x = gauss(rng);
  PhaseField w = PhaseField::from_values(g, std::move(white));
  const std::vector<std::complex<double>>& s = w.spectrum();
  std::vector<std::complex<double>> out(s.size());
  for_each_point(*g, [&](std::size_t flat, const int* idx) {
    bool keep = true;
    for (int a = 0; a < g->naxes(); ++a)
      if (std::abs(g->kindex(a, idx[a])) > kmax) keep = false;
    out[flat] = keep ? s[flat] : 0.0;
  });
  if (zero_mean) out[0] = 0.0;
  return PhaseField::from_spectrum(std::move(g), std::move(out));
}

}  // namespace knfp
