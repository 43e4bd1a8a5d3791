#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include "knfp/util.hpp"

namespace knfp {

// Periodic phase-space lattice. Kinetic grids carry d position axes followed
// by d velocity axes (velocity fastest in row-major storage); nondegenerate
// grids carry d position axes only. Boxes are centered: coord = -box/2 + i*h.
// Frequencies xi_k = 2*pi*k/box with k in {-n/2, ..., n/2-1}.
struct PhaseGrid {
  int dim = 1;
  bool kinetic = true;
  int nx = 0, nv = 0;
  double box_x = 0.0, box_v = 0.0;

  std::vector<int> shape;
  std::size_t size = 0;
  double cell = 0.0;
  double volume = 0.0;

  PhaseGrid(int dim_, bool kinetic_, int nx_, double box_x_, int nv_ = 0,
            double box_v_ = 0.0);

  int naxes() const { return static_cast<int>(shape.size()); }
  bool is_velocity_axis(int a) const { return kinetic && a >= dim; }
  double box(int a) const { return is_velocity_axis(a) ? box_v : box_x; }
  double spacing(int a) const { return box(a) / shape[a]; }
  int kindex(int a, int i) const {
    int n = shape[a];
    return i < n / 2 ? i : i - n;
  }
  double freq(int a, int i) const { return 2.0 * M_PI * kindex(a, i) / box(a); }
  double coord(int a, int i) const { return -0.5 * box(a) + spacing(a) * i; }
  // Largest resolved |xi| on an axis (magnitude of the most negative mode).
  double freq_max(int a) const { return M_PI * shape[a] / box(a); }

  bool same(const PhaseGrid& o) const;
};

using GridPtr = std::shared_ptr<const PhaseGrid>;

GridPtr make_grid(int dim, bool kinetic, int nx, double box_x, int nv = 0,
                  double box_v = 0.0);
// Position-only companion of a kinetic grid (same x axes).
GridPtr position_grid(const PhaseGrid& g);

// Scalar field with value semantics. Physical samples and the spectrum are
// synchronized lazily; fields are real-valued by contract, so constructing
// from a spectrum keeps the real part of the inverse transform.
class PhaseField {
 public:
  PhaseField() = default;

  static PhaseField from_values(GridPtr g, std::vector<double> v);
  static PhaseField from_spectrum(GridPtr g, std::vector<std::complex<double>> s);
  static PhaseField zero(GridPtr g);

  bool empty() const { return grid_ == nullptr; }
  const PhaseGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const std::vector<double>& values() const;
  const std::vector<std::complex<double>>& spectrum() const;

 private:
  GridPtr grid_;
  mutable std::vector<double> vals_;
  mutable std::vector<std::complex<double>> spec_;
  mutable bool has_vals_ = false, has_spec_ = false;
  void ensure_values() const;
  void ensure_spectrum() const;
};

// Odometer over the lattice, velocity axes fastest. idx has naxes entries.
template <class F>
void for_each_point(const PhaseGrid& g, F&& f) {
  std::array<int, 4> idx{};
  const int na = g.naxes();
  for (std::size_t flat = 0; flat < g.size; ++flat) {
    f(flat, idx.data());
    for (int a = na - 1; a >= 0; --a) {
      if (++idx[a] < g.shape[a]) break;
      idx[a] = 0;
    }
  }
}

PhaseField to_spectral(const PhaseField& f);

// Mixed norm: L^{p_x} over position first (for each velocity point), then
// L^{p_v} over velocity. Midpoint quadrature; p = kInf takes the lattice max.
// On nondegenerate grids p_v is ignored.
double mixed_lp_norm(const PhaseField& f, double p_x, double p_v);
double lp_norm(const PhaseField& f, double p);

double total_mass(const PhaseField& f);

// f(x,v) -> f(x - t*v, v), exact for x-bandlimited data (per-velocity
// modulation of the position spectrum by exp(-i t v.xi_x)).
PhaseField shear(const PhaseField& f, double t);

PhaseField derivative(const PhaseField& f, int axis, int order = 1);

PhaseField add(const PhaseField& a, const PhaseField& b);
PhaseField sub(const PhaseField& a, const PhaseField& b);
PhaseField scale(const PhaseField& a, double c);
// a + c*b without extra temporaries.
PhaseField axpy(const PhaseField& a, double c, const PhaseField& b);
PhaseField multiply(const PhaseField& a, const PhaseField& b);

// Spectral multiplier m(flat mode index) applied to the spectrum.
PhaseField multiply_spectrum(const PhaseField& f,
                             const std::vector<std::complex<double>>& m);

// Exact convolution of bandlimited representatives: coefficients vol*fg.
PhaseField convolve(const PhaseField& a, const PhaseField& b);

// Two-thirds rule: zero every mode with |k| > n/3 on any axis.
PhaseField dealias(const PhaseField& f);
bool is_dealiased(const PhaseField& f);

// Integrate over the velocity axes of a kinetic field; result lives on the
// position-only companion grid.
PhaseField velocity_marginal(const PhaseField& f);
// Lift a position-only field to a kinetic grid, constant in velocity.
PhaseField lift_to_phase(const PhaseField& fx, GridPtr kinetic_grid);

// Separable Gaussian bump amp * prod_a exp(-(z_a-c_a)^2 / (2 sigma_a^2)).
PhaseField gaussian(GridPtr g, const std::vector<double>& center,
                    const std::vector<double>& sigma, double amp = 1.0);
// Real field with spectrum supported in |k| <= kmax per axis.
PhaseField random_band_limited(GridPtr g, int kmax, std::uint64_t seed,
                               bool zero_mean = false);

}  // namespace knfp
