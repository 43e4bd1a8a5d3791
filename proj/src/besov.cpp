#include "knfp/besov.hpp"

#include <algorithm>
#include <cmath>

namespace knfp {

namespace {

double psi(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }

constexpr std::size_t kRadiusCacheCap = std::size_t{1} << 22;

}  // namespace

double dyadic_ramp(double r) {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  double a = psi(2.0 - r), b = psi(r - 1.0);
  return a / (a + b);
}

DyadicPartition::DyadicPartition(GridPtr grid, double alpha, bool anisotropic)
    : grid_(std::move(grid)), alpha_(alpha), aniso_(anisotropic) {
  require(grid_ != nullptr, "partition: null grid");
  require(alpha_ > 1.0 && alpha_ <= 2.0, "partition: alpha must lie in (1, 2]");
  require(!aniso_ || grid_->kinetic, "partition: scaled gauge needs a kinetic grid");

  double rmax = 0.0;
  if (aniso_) {
    double fx = 0.0, fv = 0.0;
    for (int a = 0; a < grid_->naxes(); ++a) {
      double m = grid_->freq_max(a);
      if (grid_->is_velocity_axis(a))
        fv += m * m;
      else
        fx += m * m;
    }
    rmax = std::pow(std::sqrt(fx), 1.0 / (1.0 + alpha_)) + std::sqrt(fv);
  } else {
    double s = 0.0;
    for (int a = 0; a < grid_->naxes(); ++a) {
      double m = grid_->freq_max(a);
      s += m * m;
    }
    rmax = std::sqrt(s);
  }
  levels_ = static_cast<int>(std::ceil(std::log2(rmax))) + 2;  // j_max + 1 levels

  if (grid_->size <= kRadiusCacheCap) {
    radius_.resize(grid_->size);
    for_each_point(*grid_, [&](std::size_t flat, const int* idx) {
      radius_[flat] = gauge(idx);
    });
  }
}

double DyadicPartition::gauge(const int* idx) const {
  const PhaseGrid& g = *grid_;
  if (!aniso_) {
    double s = 0.0;
    for (int a = 0; a < g.naxes(); ++a) {
      double f = g.freq(a, idx[a]);
      s += f * f;
    }
    return std::sqrt(s);
  }
  double sx = 0.0, sv = 0.0;
  for (int a = 0; a < g.naxes(); ++a) {
    double f = g.freq(a, idx[a]);
    if (g.is_velocity_axis(a))
      sv += f * f;
    else
      sx += f * f;
  }
  double rx = std::sqrt(sx);
  return (rx > 0.0 ? std::pow(rx, 1.0 / (1.0 + alpha_)) : 0.0) + std::sqrt(sv);
}

double DyadicPartition::mask(int j, double r) const {
  require(j >= 0 && j < levels_, "partition: level out of range");
  if (j == 0) return dyadic_ramp(r);
  return dyadic_ramp(std::ldexp(r, -j)) - dyadic_ramp(std::ldexp(r, -(j - 1)));
}

double DyadicPartition::mask_at(int j, std::size_t flat, const int* idx) const {
  double r = radius_.empty() ? gauge(idx) : radius_[flat];
  return mask(j, r);
}

PhaseField DyadicPartition::block(const PhaseField& f, int j) const {
  require(!f.empty() && f.grid().same(*grid_), "partition: field/grid mismatch");
  require(j >= 0 && j < levels_, "partition: level out of range");
  const auto& s = f.spectrum();
  std::vector<std::complex<double>> out(s.size());
  for_each_point(*grid_, [&](std::size_t flat, const int* idx) {
    out[flat] = s[flat] * mask_at(j, flat, idx);
  });
  return PhaseField::from_spectrum(f.grid_ptr(), std::move(out));
}

std::vector<PhaseField> DyadicPartition::split(const PhaseField& f) const {
  require(!f.empty() && f.grid().same(*grid_), "partition: field/grid mismatch");
  std::vector<PhaseField> blocks;
  blocks.reserve(levels_);
  for (int j = 0; j < levels_; ++j) blocks.push_back(block(f, j));
  return blocks;
}

std::vector<double> DyadicPartition::block_norms(const PhaseField& f, double p_x,
                                                 double p_v) const {
  std::vector<double> out(levels_);
  for (int j = 0; j < levels_; ++j) out[j] = mixed_lp_norm(block(f, j), p_x, p_v);
  return out;
}

double besov_norm(const DyadicPartition& P, const PhaseField& f, double s,
                  double q, double p_x, double p_v) {
  require(q >= 1.0, "besov_norm: q must be >= 1 (or inf)");
  std::vector<double> bn = P.block_norms(f, p_x, p_v);
  if (q == kInf) {
    double m = 0.0;
    for (int j = 0; j < P.levels(); ++j) m = std::max(m, std::exp2(j * s) * bn[j]);
    return m;
  }
  double acc = 0.0;
  for (int j = 0; j < P.levels(); ++j) acc += std::pow(std::exp2(j * s) * bn[j], q);
  return std::pow(acc, 1.0 / q);
}

namespace {

// Pointwise Euclidean magnitude of the gradient over one axis block.
PhaseField block_gradient_magnitude(const PhaseField& f, int a0, int a1) {
  std::vector<double> acc(f.grid().size, 0.0);
  for (int a = a0; a < a1; ++a) {
    PhaseField df = derivative(f, a);
    const auto& d = df.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i] * d[i];
  }
  for (double& x : acc) x = std::sqrt(x);
  return PhaseField::from_values(f.grid_ptr(), std::move(acc));
}

}  // namespace

double bernstein_ratio(const DyadicPartition& P, const PhaseField& f, int j,
                       int k1, int k2, double px, double pv, double qx, double qv) {
  require(k1 >= 0 && k1 <= 1 && k2 >= 0 && k2 <= 1,
          "bernstein_ratio: derivative orders restricted to {0,1}");
  const PhaseGrid& g = P.grid();
  require(g.kinetic || k2 == 0, "bernstein_ratio: k2 needs velocity axes");
  PhaseField b = P.block(f, j);
  double den_norm = mixed_lp_norm(b, px, pv);
  if (den_norm == 0.0) return 0.0;

  PhaseField num_field = b;
  if (k1 == 1 && k2 == 1) {
    // Mixed first orders: gradient magnitude of each x-derivative's v-gradient
    // collapses to |grad_v grad_x b| via nesting on the single-axis case; for
    // the diagnostics only single-block orders are exercised.
    num_field = block_gradient_magnitude(block_gradient_magnitude(b, 0, g.dim),
                                         g.dim, g.naxes());
  } else if (k1 == 1) {
    num_field = block_gradient_magnitude(b, 0, g.dim);
  } else if (k2 == 1) {
    num_field = block_gradient_magnitude(b, g.dim, g.naxes());
  }
  double num = mixed_lp_norm(num_field, qx, qv);

  const double d = g.dim;
  auto inv = [](double p) { return p == kInf ? 0.0 : 1.0 / p; };
  double w;
  if (P.anisotropic()) {
    w = (1.0 + P.alpha()) * (k1 + d * (inv(px) - inv(qx))) +
        (k2 + d * (inv(pv) - inv(qv)));
  } else if (g.kinetic) {
    w = (k1 + d * (inv(px) - inv(qx))) + (k2 + d * (inv(pv) - inv(qv)));
  } else {
    w = k1 + d * (inv(px) - inv(qx));
  }
  return num / (std::exp2(j * w) * den_norm);
}

PhaseField roll_lattice(const PhaseField& f, const std::vector<int>& steps) {
  require(!f.empty(), "roll_lattice: empty field");
  const PhaseGrid& g = f.grid();
  require(static_cast<int>(steps.size()) == g.naxes(),
          "roll_lattice: one step count per axis");
  const auto& v = f.values();
  std::vector<double> out(g.size);
  for_each_point(g, [&](std::size_t flat, const int* idx) {
    std::size_t src = 0;
    for (int a = 0; a < g.naxes(); ++a) {
      int n = g.shape[a];
      int s = ((idx[a] + steps[a]) % n + n) % n;
      src = src * static_cast<std::size_t>(n) + static_cast<std::size_t>(s);
    }
    out[flat] = v[src];
  });
  return PhaseField::from_values(f.grid_ptr(), std::move(out));
}

double holder_seminorm(const PhaseField& f, double s, double alpha,
                       bool anisotropic) {
  require(s > 0.0 && s < 1.0, "holder_seminorm: s must lie in (0,1)");
  const PhaseGrid& g = f.grid();
  require(!anisotropic || g.kinetic, "holder_seminorm: scaled gauge needs kinetic grid");
  const auto& v = f.values();

  auto offset_gauge = [&](const std::vector<int>& st) {
    double sx = 0.0, sv = 0.0;
    for (int a = 0; a < g.naxes(); ++a) {
      double h = st[a] * g.spacing(a);
      if (anisotropic && g.is_velocity_axis(a))
        sv += h * h;
      else
        sx += h * h;
    }
    if (!anisotropic) return std::sqrt(sx);
    double rx = std::sqrt(sx);
    return (rx > 0.0 ? std::pow(rx, 1.0 / (1.0 + alpha)) : 0.0) + std::sqrt(sv);
  };

  double best = 0.0;
  auto probe = [&](const std::vector<int>& st) {
    bool all_zero = true;
    for (int x : st) all_zero = all_zero && x == 0;
    if (all_zero) return;
    const auto& w = roll_lattice(f, st).values();
    double diff = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      diff = std::max(diff, std::abs(w[i] - v[i]));
    best = std::max(best, diff / std::pow(offset_gauge(st), s));
  };

  const int na = g.naxes();
  for (int a = 0; a < na; ++a) {
    int cap = std::min(g.shape[a] / 4, 16);
    for (int m = 1; m <= cap; ++m) {
      std::vector<int> st(na, 0);
      st[a] = m;
      probe(st);
    }
  }
  // A few diagonal offsets so mixed directions are represented.
  for (int m : {1, 2, 4}) {
    std::vector<int> st(na, m);
    probe(st);
  }
  return best;
}

io::CsvTable besov_profile(const DyadicPartition& P, const PhaseField& f,
                           double s, double p_x, double p_v) {
  io::CsvTable t;
  t.header = {"level", "block_norm", "weighted"};
  std::vector<double> bn = P.block_norms(f, p_x, p_v);
  for (int j = 0; j < P.levels(); ++j)
    t.rows.push_back({static_cast<double>(j), bn[j], std::exp2(j * s) * bn[j]});
  return t;
}

}  // namespace knfp
