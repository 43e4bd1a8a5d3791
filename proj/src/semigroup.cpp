#include "knfp/semigroup.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

namespace knfp {

namespace {

struct Quadratic {
  double a, b, c;  // |xi_v - s xi_x|^2 = a s^2 - 2 b s + c
};

Quadratic dots(const double* xi_x, const double* xi_v, int d) {
  Quadratic q{0.0, 0.0, 0.0};
  for (int i = 0; i < d; ++i) {
    q.a += xi_x[i] * xi_x[i];
    q.b += xi_v[i] * xi_x[i];
    q.c += xi_v[i] * xi_v[i];
  }
  return q;
}

// int_0^t A^alpha |s - s0|^alpha ds, the parallel-frequency case.
double powerlaw_exponent(double alpha, double t, double amp, double s0) {
  auto F = [&](double u) {
    return std::copysign(std::pow(std::abs(u), alpha + 1.0), u);
  };
  return std::pow(amp, alpha) * (F(t - s0) + F(s0)) / (alpha + 1.0);
}

}  // namespace

double symbol_exponent_quadrature(double alpha, double t, const double* xi_x,
                                  const double* xi_v, int d, double rel_tol) {
  require(alpha > 1.0 && alpha <= 2.0, "symbol_exponent: alpha must lie in (1,2]");
  require(t >= 0.0, "symbol_exponent: negative time");
  require(d == 1 || d == 2, "symbol_exponent: d must be 1 or 2");
  if (t == 0.0) return 0.0;
  Quadratic q = dots(xi_x, xi_v, d);
  auto f = [&](double s) {
    double val = std::max(q.a * s * s - 2.0 * q.b * s + q.c, 0.0);
    return std::pow(val, 0.5 * alpha);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double split = q.a > 0.0 ? std::clamp(q.b / q.a, 0.0, t) : 0.0;
  double total = 0.0;
  if (split > 0.0) total += GK::integrate(f, 0.0, split, 15, rel_tol);
  if (split < t) total += GK::integrate(f, split, t, 15, rel_tol);
  return total;
}

double symbol_exponent(double alpha, double t, const double* xi_x,
                       const double* xi_v, int d) {
  require(alpha > 1.0 && alpha <= 2.0, "symbol_exponent: alpha must lie in (1,2]");
  require(t >= 0.0, "symbol_exponent: negative time");
  require(d == 1 || d == 2, "symbol_exponent: d must be 1 or 2");
  if (t == 0.0) return 0.0;
  Quadratic q = dots(xi_x, xi_v, d);
  if (alpha == 2.0)
    return t * q.c - t * t * q.b + (t * t * t / 3.0) * q.a;
  if (q.a == 0.0) return t * std::pow(q.c, 0.5 * alpha);
  const double rho2 = std::max(q.c - q.b * q.b / q.a, 0.0);
  if (rho2 <= 16.0 * std::numeric_limits<double>::epsilon() * q.c)
    return powerlaw_exponent(alpha, t, std::sqrt(q.a), q.b / q.a);
  return symbol_exponent_quadrature(alpha, t, xi_x, xi_v, d);
}

Semigroup::Semigroup(GridPtr grid, double alpha)
    : grid_(std::move(grid)), alpha_(alpha) {
  require(grid_ != nullptr, "semigroup: null grid");
  require(alpha_ > 1.0 && alpha_ <= 2.0, "semigroup: alpha must lie in (1,2]");
}

const std::vector<double>& Semigroup::multiplier(double t) const {
  require(t >= 0.0, "semigroup: negative time");
  auto it = cache_.find(t);
  if (it != cache_.end()) return it->second;
  const PhaseGrid& g = *grid_;
  std::vector<double> m(g.size);
  if (g.kinetic) {
    const int d = g.dim;
    for_each_point(g, [&](std::size_t flat, const int* idx) {
      double xx[2] = {0.0, 0.0}, xv[2] = {0.0, 0.0};
      for (int a = 0; a < d; ++a) {
        xx[a] = g.freq(a, idx[a]);
        xv[a] = g.freq(d + a, idx[d + a]);
      }
      m[flat] = std::exp(-symbol_exponent(alpha_, t, xx, xv, d));
    });
  } else {
    for_each_point(g, [&](std::size_t flat, const int* idx) {
      double s = 0.0;
      for (int a = 0; a < g.naxes(); ++a) {
        double f = g.freq(a, idx[a]);
        s += f * f;
      }
      m[flat] = std::exp(-t * std::pow(s, 0.5 * alpha_));
    });
  }
  return cache_.emplace(t, std::move(m)).first->second;
}

PhaseField Semigroup::apply(const PhaseField& f, double t) const {
  require(!f.empty() && f.grid().same(*grid_), "semigroup: field/grid mismatch");
  require(t >= 0.0, "semigroup: negative time");
  if (t == 0.0) return f;
  const std::vector<double>& m = multiplier(t);
  const auto& s = f.spectrum();
  std::vector<std::complex<double>> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = m[i] * s[i];
  PhaseField damped = PhaseField::from_spectrum(f.grid_ptr(), std::move(out));
  return grid_->kinetic ? shear(damped, t) : damped;
}

PhaseField kinetic_apply(const PhaseField& f, double alpha, double t) {
  require(!f.empty() && f.grid().kinetic, "kinetic_apply: kinetic grid required");
  return Semigroup(f.grid_ptr(), alpha).apply(f, t);
}

PhaseField isotropic_apply(const PhaseField& f, double alpha, double t) {
  require(!f.empty() && !f.grid().kinetic,
          "isotropic_apply: position-only grid required");
  return Semigroup(f.grid_ptr(), alpha).apply(f, t);
}

PhaseField duhamel(const Semigroup& S, const std::vector<PhaseField>& flux, double t) {
  require(flux.size() >= 2, "duhamel: need at least two nodes");
  require(t > 0.0, "duhamel: horizon must be positive");
  const std::size_t m = flux.size();
  const double h = t / static_cast<double>(m - 1);
  PhaseField acc;
  for (std::size_t k = 0; k < m; ++k) {
    const double w = (k == 0 || k == m - 1) ? 0.5 * h : h;
    PhaseField term = S.apply(flux[k], t - static_cast<double>(k) * h);
    acc = acc.empty() ? scale(term, w) : axpy(acc, w, term);
  }
  return acc;
}

SlopeReport smoothing_slope(const Semigroup& S, const DyadicPartition& P,
                            const PhaseField& f0, double s, double p_x,
                            double p_v, const std::vector<double>& times) {
  require(times.size() >= 3, "smoothing_slope: need at least 3 times");
  SlopeReport r;
  r.times = times;
  for (double t : times)
    r.norms.push_back(besov_norm(P, S.apply(f0, t), s, 1.0, p_x, p_v));
  LineFit fit = fit_loglog(r.times, r.norms);
  r.slope = fit.slope;
  r.r2 = fit.r2;
  return r;
}

}  // namespace knfp
