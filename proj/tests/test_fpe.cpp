#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "knfp/fpe.hpp"
#include "knfp/semigroup.hpp"

using namespace knfp;

namespace {

double rel_l2(const PhaseField& a, const PhaseField& b) {
  double den = lp_norm(b, 2.0);
  return lp_norm(sub(a, b), 2.0) / (den > 0.0 ? den : 1.0);
}

SolverConfig free_config(GridPtr g, double alpha, double horizon, int steps) {
  SolverConfig cfg;
  cfg.name = "free";
  cfg.mode = g->kinetic ? SolverMode::kinetic : SolverMode::nondegenerate;
  cfg.alpha = alpha;
  cfg.kernel.family = KernelFamily::zero;
  cfg.grid = g;
  cfg.horizon = horizon;
  cfg.steps = steps;
  cfg.scheme = Scheme::exp_march;
  return cfg;
}

}  // namespace

TEST_CASE("config json round trip is the identity and hashing is stable") {
  SolverConfig cfg = preset_config("vpfp1d");
  std::string text = config_to_json(cfg);
  SolverConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));

  // Any semantic change moves the hash.
  SolverConfig other = cfg;
  other.steps += 4;
  CHECK(config_hash(other) != config_hash(cfg));
  other = cfg;
  other.kernel.cutoff_eps = 0.125;
  CHECK(config_hash(other) != config_hash(cfg));

  // Infinities survive serialization (besov channel with q = inf).
  SolverConfig nse = preset_config("nse2d");
  REQUIRE(!nse.besov_channels.empty());
  CHECK(std::isinf(nse.besov_channels[0].q));
  SolverConfig nse_back = config_from_json(config_to_json(nse));
  CHECK(std::isinf(nse_back.besov_channels[0].q));
  CHECK(config_to_json(nse_back) == config_to_json(nse));
}

TEST_CASE("config parsing rejects malformed input") {
  SolverConfig cfg = preset_config("vpfp1d");
  nlohmann::json j = nlohmann::json::parse(config_to_json(cfg));

  {
    nlohmann::json bad = j;
    bad["bogus_field"] = 1;
    CHECK_THROWS_WITH_AS(config_from_json(bad.dump()),
                         doctest::Contains("unknown field"), std::invalid_argument);
  }
  {
    nlohmann::json bad = j;
    bad["steps"] = 4;  // below the minimum resolution of the time lattice
    CHECK_THROWS_AS(config_from_json(bad.dump()), std::invalid_argument);
  }
  {
    nlohmann::json bad = j;
    bad["picard_tol"] = 0.0;
    CHECK_THROWS_AS(config_from_json(bad.dump()), std::invalid_argument);
  }
  {
    nlohmann::json bad = j;
    bad["alpha"] = 0.9;  // outside (1, 2]
    CHECK_THROWS_AS(config_from_json(bad.dump()), std::invalid_argument);
  }
  {
    nlohmann::json bad = j;
    bad["mode"] = "nondegenerate";  // grid stays kinetic: mismatch
    CHECK_THROWS_AS(config_from_json(bad.dump()), std::invalid_argument);
  }

  CHECK_THROWS_AS(preset_config("unknown_preset"), std::invalid_argument);

  // Kinetic lift on a nondegenerate run is rejected up front.
  SolverConfig mix = preset_config("nse2d");
  mix.kernel.lift = KineticLift::x_marginal;
  CHECK_THROWS_AS(validate_config(mix), std::invalid_argument);
}

TEST_CASE("flux respects parity and conserves mass by construction") {
  auto g = make_grid(1, false, 128, 12.0);
  PhaseField u = gaussian(g, {0.0}, {1.1});

  KernelSpec spec;
  spec.family = KernelFamily::riesz_grad;
  spec.gamma = 1.5;

  // Odd kernel * even density -> odd flux; reflection index is (n - i) mod n.
  std::vector<PhaseField> F = nonlinear_flux(u, spec, DealiasRule::two_thirds);
  REQUIRE(F.size() == 1);
  const auto& fv = F[0].values();
  double sup = 0.0, odd_defect = 0.0;
  for (int i = 0; i < g->nx; ++i) {
    sup = std::max(sup, std::abs(fv[i]));
    odd_defect = std::max(odd_defect, std::abs(fv[i] + fv[(g->nx - i) % g->nx]));
  }
  CHECK(sup > 1e-6);
  CHECK(odd_defect <= 1e-12 * sup);

  // The divergence is a spectral derivative: its mean vanishes identically.
  PhaseField div = flux_divergence(F);
  CHECK(std::abs(total_mass(div)) <= 1e-14 * sup);

  // Zero density -> zero flux, exactly.
  std::vector<PhaseField> Fz = nonlinear_flux(PhaseField::zero(g), spec, DealiasRule::two_thirds);
  for (double v : Fz[0].values()) CHECK(v == 0.0);

  // Non-finite data is refused rather than propagated.
  PhaseField bad = u;
  {
    auto vals = bad.values();
    vals[7] = std::numeric_limits<double>::quiet_NaN();
    bad = PhaseField::from_values(g, vals);
  }
  CHECK_THROWS_AS(nonlinear_flux(bad, spec, DealiasRule::two_thirds), std::domain_error);
}

TEST_CASE("dealias rule controls the retained band of the flux") {
  auto g = make_grid(1, false, 64, 2.0 * M_PI);
  PhaseField u = random_band_limited(g, 30, 99);  // well past n/3
  u = axpy(scale(u, 0.05), 1.0, gaussian(g, {0.0}, {0.8}));

  KernelSpec spec;
  spec.family = KernelFamily::riesz_grad;
  spec.gamma = 1.5;

  std::vector<PhaseField> masked = nonlinear_flux(u, spec, DealiasRule::two_thirds);
  CHECK(is_dealiased(masked[0]));

  std::vector<PhaseField> raw = nonlinear_flux(u, spec, DealiasRule::none);
  CHECK(!is_dealiased(raw[0]));
}

TEST_CASE("picard with no interaction reproduces free flow in one sweep") {
  SolverConfig cfg = preset_config("vpfp1d");
  cfg.kernel = KernelSpec{};
  cfg.kernel.family = KernelFamily::zero;
  cfg.scheme = Scheme::global_picard;
  PhaseField u0 = preset_initial(preset_config("vpfp1d"), 1.0);

  SolverRun run = solve(u0, cfg);
  CHECK(run.converged);
  CHECK(run.iterations == 1);
  CHECK(!run.diverged);

  Semigroup S(cfg.grid, cfg.alpha);
  double worst = 0.0;
  for (std::size_t k = 0; k < run.snapshots.size(); ++k)
    worst = std::max(worst, rel_l2(run.snapshots[k], S.apply(u0, run.times[k])));
  CHECK(worst <= 1e-12);
  CHECK(mild_residual(run, cfg) <= 1e-12);
}

TEST_CASE("preset interaction contracts at unit mass and diverges at four times it") {
  SolverConfig cfg = preset_config("vpfp1d");

  PhaseField u1 = preset_initial(cfg, 1.0);
  SolverRun small = picard_solve(u1, cfg);
  CHECK(small.converged);
  CHECK(!small.diverged);
  REQUIRE(small.contraction_ratios.size() >= 3);
  for (std::size_t i = 1; i < small.contraction_ratios.size(); ++i)
    CHECK(small.contraction_ratios[i] < 0.5);
  CHECK(mild_residual(small, cfg) <= 1e-6);

  // Conservation and positivity bookkeeping on the converged run.
  const std::vector<double>& mass = run_channel(small, "mass");
  for (double m : mass) CHECK(std::abs(m - mass.front()) <= 1e-12 * std::abs(mass.front()));
  CHECK(small.min_density >= -1e-6);

  PhaseField u4 = preset_initial(cfg, 4.0);
  SolverRun big = picard_solve(u4, cfg);
  CHECK(big.diverged);
  CHECK(!big.converged);
  CHECK(big.note.find("grew") != std::string::npos);

  // The a-priori margin has the matching signs.
  double m1 = smallness_margin(u1, cfg.kernel, cfg);
  double m4 = smallness_margin(u4, cfg.kernel, cfg);
  CHECK(m1 > 0.0);
  CHECK(m4 < 0.0);

  // The norm side of the margin is exactly 1-homogeneous in the data.
  double c0 = cfg.smallness.c0;
  CHECK(std::abs((c0 - m4) - 4.0 * (c0 - m1)) <= 1e-12 * std::abs(c0 - m4));
}

TEST_CASE("march with no drift follows the semigroup trajectory") {
  // Nondegenerate: isotropic multipliers compose exactly on any lattice.
  {
    auto g = make_grid(1, false, 64, 2.0 * M_PI);
    SolverConfig cfg = free_config(g, 1.5, 0.8, 8);
    PhaseField u0 = gaussian(g, {0.3}, {0.5});
    SolverRun run = solve(u0, cfg);
    REQUIRE(run.converged);
    Semigroup S(g, cfg.alpha);
    double worst = 0.0;
    for (std::size_t k = 0; k < run.snapshots.size(); ++k)
      worst = std::max(worst, rel_l2(run.snapshots[k], S.apply(u0, run.times[k])));
    CHECK(worst <= 1e-12);
  }
  // Kinetic: the discrete shear composes exactly when every step moves
  // active x-modes by whole velocity-frequency indices (t * kx * Lv/Lx in Z)
  // and the sheared band stays inside the velocity Nyquist range.
  {
    auto g = make_grid(1, true, 64, 5.0, 64, 20.0);
    SolverConfig cfg = free_config(g, 2.0, 2.0, 8);  // h = 0.25, Lv/Lx = 4
    PhaseField u0 = random_band_limited(g, 2, 4242);
    u0 = axpy(scale(u0, 0.1), 1.0, gaussian(g, {0.0, 0.0}, {1.0, 2.0}));
    SolverRun run = solve(u0, cfg);
    REQUIRE(run.converged);
    Semigroup S(g, cfg.alpha);
    double worst = 0.0;
    for (std::size_t k = 0; k < run.snapshots.size(); ++k)
      worst = std::max(worst, rel_l2(run.snapshots[k], S.apply(u0, run.times[k])));
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("march error falls by about four when the step is halved") {
  SolverConfig cfg = preset_config("vpfp1d");
  cfg.scheme = Scheme::exp_march;
  PhaseField u0 = preset_initial(cfg, 1.0);

  auto terminal = [&](int steps) {
    SolverConfig c = cfg;
    c.steps = steps;
    SolverRun r = march_solve(u0, c);
    REQUIRE(r.converged);
    return r.snapshots.back();
  };

  PhaseField ref = terminal(96);
  double eh = lp_norm(sub(terminal(12), ref), 2.0);
  double eh2 = lp_norm(sub(terminal(24), ref), 2.0);
  CHECK(eh > 0.0);
  double ratio = eh / eh2;  // measured 4.17 for this configuration
  CHECK(ratio >= 2.5);
  CHECK(ratio <= 6.0);
}

TEST_CASE("blow-up guard aborts a runaway attractive interaction") {
  SolverConfig cfg = preset_config("pme1d");
  cfg.kernel.sign = 1.0;  // attractive branch
  cfg.horizon = 2.0;
  cfg.steps = 16;
  PhaseField u0 = preset_initial(cfg, 400.0);

  SolverRun run = march_solve(u0, cfg);
  CHECK(run.aborted);
  CHECK(!run.converged);
  CHECK(run.note.find("blow-up") != std::string::npos);
  CHECK(run.iterations < cfg.steps);
}

TEST_CASE("mild residual responds linearly to a snapshot perturbation") {
  SolverConfig cfg = preset_config("vpfp1d");
  PhaseField u0 = preset_initial(cfg, 1.0);
  SolverRun run = picard_solve(u0, cfg);
  REQUIRE(run.converged);

  double base = mild_residual(run, cfg);
  CHECK(base <= 1e-6);

  PhaseField bump = gaussian(cfg.grid, {2.0, -1.0}, {1.5, 1.5});
  auto perturbed = [&](double delta) {
    SolverRun q = run;
    q.snapshots.back() = axpy(q.snapshots.back(), delta, bump);
    return mild_residual(q, cfg);
  };
  double r1 = perturbed(1e-4);
  double r2 = perturbed(2e-4);
  CHECK(r1 >= 100.0 * base);  // the perturbation dominates the converged defect
  CHECK(r2 / r1 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("weak residual vanishes on constants and bounds converged runs") {
  SolverConfig cfg = preset_config("vpfp1d");
  cfg.picard_tol = 1e-4;
  cfg.steps = 24;
  PhaseField u0 = preset_initial(preset_config("vpfp1d"), 1.0);
  SolverRun run = picard_solve(u0, cfg);
  REQUIRE(run.converged);

  // A constant test function reduces the weak defect to pure mass drift.
  {
    std::vector<double> ones(cfg.grid->size, 1.0);
    std::vector<PhaseField> tests;
    tests.push_back(PhaseField::from_values(cfg.grid, ones));
    CHECK(weak_residual(run, cfg, tests) <= 1e-10);
  }

  std::vector<PhaseField> tests;
  tests.push_back(gaussian(cfg.grid, {1.0, -0.5}, {3.0, 2.5}));
  tests.push_back(gaussian(cfg.grid, {-2.0, 1.0}, {2.0, 4.0}, 0.6));

  double weak = weak_residual(run, cfg, tests);
  double mild = mild_residual(run, cfg);
  CHECK(weak > 0.0);
  CHECK(weak <= 10.0 * mild);  // measured ratio 2.8 at this tolerance and step count

  // Free flow isolates the time-quadrature floor of the weak form.
  SolverConfig fc = preset_config("vpfp1d");
  fc.kernel = KernelSpec{};
  fc.kernel.family = KernelFamily::zero;
  fc.scheme = Scheme::exp_march;
  SolverRun fr = solve(u0, fc);
  CHECK(weak_residual(fr, fc, tests) <= 1e-4);  // measured 1.1e-5 at 12 steps
}

TEST_CASE("smallness margin is the threshold minus a 1-homogeneous norm product") {
  SolverConfig cfg = preset_config("vpfp1d");

  // Zero data: the margin is the whole threshold.
  CHECK(smallness_margin(PhaseField::zero(cfg.grid), cfg.kernel, cfg) ==
        doctest::Approx(cfg.smallness.c0).epsilon(1e-14));

  // Exact scaling in the data for an unrelated shape.
  PhaseField f = axpy(gaussian(cfg.grid, {-3.0, 0.5}, {1.0, 2.0}),
                      0.7, gaussian(cfg.grid, {4.0, -2.0}, {2.0, 1.0}));
  double c0 = cfg.smallness.c0;
  double z1 = c0 - smallness_margin(f, cfg.kernel, cfg);
  double z3 = c0 - smallness_margin(scale(f, 3.0), cfg.kernel, cfg);
  CHECK(z1 > 0.0);
  CHECK(std::abs(z3 - 3.0 * z1) <= 1e-12 * z3);

  // A kernel without interaction contributes nothing.
  KernelSpec none;
  none.family = KernelFamily::zero;
  CHECK(smallness_margin(f, none, cfg) == doctest::Approx(c0).epsilon(1e-14));

  CHECK_THROWS_AS(smallness_margin(f, cfg.kernel, SolverConfig{}), std::invalid_argument);
}

TEST_CASE("free spreading decays at the self-similar rate") {
  auto g = make_grid(1, false, 4096, 400.0);
  SolverConfig cfg = free_config(g, 2.0, 50.0, 100);
  PhaseField u0 = gaussian(g, {0.0}, {0.5});
  u0 = scale(u0, 1.0 / total_mass(u0));

  SolverRun run = solve(u0, cfg);
  REQUIRE(run.converged);

  DecayFit linf = decay_rate(run, "linf", 5.0, 50.0);
  CHECK(linf.samples >= 50);
  CHECK(linf.slope == doctest::Approx(-0.5).epsilon(0.1));  // measured -0.4962
  CHECK(linf.r2 >= 0.999);

  DecayFit mass = decay_rate(run, "mass", 5.0, 50.0);
  CHECK(std::abs(mass.slope) <= 1e-6);

  // A window with too few usable samples is refused.
  CHECK_THROWS_AS(decay_rate(run, "linf", 49.9, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(decay_rate(run, "no_such_channel", 5.0, 50.0), std::invalid_argument);
}

TEST_CASE("stability compare flags identity and scales with the input gap") {
  SolverConfig cfg = preset_config("vpfp1d");
  PhaseField u0 = preset_initial(cfg, 1.0);
  SolverRun a = picard_solve(u0, cfg);
  REQUIRE(a.converged);

  StabilityReport self = stability_compare(a, a, 0.0, cfg);
  CHECK(self.exact_equal);
  CHECK(self.max_ratio == 0.0);

  PhaseField dir = gaussian(cfg.grid, {1.0, 0.5}, {2.0, 1.5});
  double ratios[2];
  double deltas[2] = {1e-3, 1e-4};
  for (int i = 0; i < 2; ++i) {
    PhaseField v0 = axpy(u0, deltas[i], dir);
    SolverRun b = picard_solve(v0, cfg);
    REQUIRE(b.converged);
    StabilityReport rep = stability_compare(a, b, lp_norm(sub(u0, v0), 2.0), cfg);
    CHECK(!rep.exact_equal);
    CHECK(rep.max_ratio >= 0.5);
    CHECK(rep.max_ratio <= 3.0);
    ratios[i] = rep.max_ratio;
  }
  // The normalized growth is a property of the flow, not of the gap size.
  CHECK(ratios[0] == doctest::Approx(ratios[1]).epsilon(0.5));

  SolverConfig other = cfg;
  other.steps = cfg.steps * 2;
  SolverRun c = picard_solve(u0, other);
  CHECK_THROWS_AS(stability_compare(a, c, 0.0, cfg), std::invalid_argument);
}

TEST_CASE("radial vorticity rides the heat flow") {
  // For a radial profile the induced transport field is azimuthal, so the
  // nonlinear term cancels pointwise and the evolution is purely diffusive.
  SolverConfig cfg = preset_config("nse2d");
  PhaseField w0 = preset_initial(cfg, 1e-2);
  double nw = lp_norm(w0, 2.0);

  PhaseField div = flux_divergence(nonlinear_flux(w0, cfg.kernel, cfg.dealias));
  CHECK(lp_norm(div, 2.0) / nw <= 1e-6);  // measured 4.4e-8 (torus images only)

  SolverRun run = march_solve(w0, cfg);
  REQUIRE(run.converged);
  Semigroup S(cfg.grid, cfg.alpha);
  double worst = 0.0;
  for (std::size_t k = 0; k < run.snapshots.size(); ++k)
    worst = std::max(worst, rel_l2(run.snapshots[k], S.apply(w0, run.times[k])));
  CHECK(worst <= 1e-6);  // measured 2.8e-8
}

TEST_CASE("picard and march agree within their combined tolerances") {
  SolverConfig cfg = preset_config("vpfp1d");
  cfg.steps = 24;
  PhaseField u0 = preset_initial(cfg, 1.0);

  SolverConfig pc = cfg;
  pc.scheme = Scheme::global_picard;
  SolverRun p = solve(u0, pc);
  REQUIRE(p.converged);

  SolverConfig mc = cfg;
  mc.scheme = Scheme::exp_march;
  SolverRun m = solve(u0, mc);
  REQUIRE(m.converged);

  SolverConfig mc2 = mc;
  mc2.steps = 2 * mc.steps;
  SolverRun m2 = solve(u0, mc2);
  double richardson = (4.0 / 3.0) * lp_norm(sub(m.snapshots.back(), m2.snapshots.back()), 2.0);

  double gap = lp_norm(sub(p.snapshots.back(), m.snapshots.back()), 2.0);
  CHECK(gap <= 5.0 * (cfg.picard_tol + richardson));
}

TEST_CASE("monitor table lays out time and channels per snapshot") {
  SolverConfig cfg = preset_config("vpfp1d");
  cfg.scheme = Scheme::exp_march;
  cfg.steps = 8;
  cfg.horizon = 0.5;
  PhaseField u0 = preset_initial(cfg, 1.0);
  SolverRun run = solve(u0, cfg);
  REQUIRE(run.converged);

  io::CsvTable table = monitor_table(run);
  REQUIRE(!table.header.empty());
  CHECK(table.header.front() == "time");
  CHECK(table.rows.size() == run.times.size());
  for (const auto& row : table.rows) CHECK(row.size() == table.header.size());

  // Channels are addressable by name, including the preset Besov channel.
  // Its t^{1/2} weight sends the first sample to zero exactly.
  const std::vector<double>& wb = run_channel(run, "wb025");
  CHECK(wb.size() == run.times.size());
  CHECK(wb.front() == 0.0);
  for (std::size_t k = 1; k < wb.size(); ++k) CHECK(wb[k] > 0.0);
  CHECK_THROWS_AS(run_channel(run, "not_a_channel"), std::invalid_argument);

  // The run carries the hash of the config that produced it.
  CHECK(run.config_hash == config_hash(cfg));
  CHECK(run.wall_seconds >= 0.0);
}
