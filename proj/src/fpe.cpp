#include "knfp/fpe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "knfp/besov.hpp"
#include "knfp/fit.hpp"
#include "knfp/semigroup.hpp"

namespace knfp {
namespace {

using nlohmann::json;

const char* mode_name(SolverMode m) {
  return m == SolverMode::kinetic ? "kinetic" : "nondegenerate";
}
SolverMode mode_from(const std::string& s) {
  if (s == "kinetic") return SolverMode::kinetic;
  if (s == "nondegenerate") return SolverMode::nondegenerate;
  throw std::invalid_argument("config: unknown mode '" + s + "'");
}

const char* scheme_name(Scheme s) {
  return s == Scheme::global_picard ? "global_picard" : "exp_march";
}
Scheme scheme_from(const std::string& s) {
  if (s == "global_picard") return Scheme::global_picard;
  if (s == "exp_march") return Scheme::exp_march;
  throw std::invalid_argument("config: unknown scheme '" + s + "'");
}

const char* dealias_name(DealiasRule r) {
  return r == DealiasRule::two_thirds ? "two_thirds" : "none";
}
DealiasRule dealias_from(const std::string& s) {
  if (s == "two_thirds") return DealiasRule::two_thirds;
  if (s == "none") return DealiasRule::none;
  throw std::invalid_argument("config: unknown dealias rule '" + s + "'");
}

const char* kind_name(NormSpec::Kind k) {
  switch (k) {
    case NormSpec::lp: return "lp";
    case NormSpec::mixed: return "mixed";
    case NormSpec::besov: return "besov";
  }
  return "lp";
}
NormSpec::Kind kind_from(const std::string& s) {
  if (s == "lp") return NormSpec::lp;
  if (s == "mixed") return NormSpec::mixed;
  if (s == "besov") return NormSpec::besov;
  throw std::invalid_argument("config: unknown norm kind '" + s + "'");
}

const char* family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::zero: return "zero";
    case KernelFamily::riesz_grad: return "riesz_grad";
    case KernelFamily::grad_newton_1d: return "grad_newton_1d";
    case KernelFamily::biot_savart_2d: return "biot_savart_2d";
    case KernelFamily::sqg_riesz_2d: return "sqg_riesz_2d";
    case KernelFamily::porous_medium: return "porous_medium";
    case KernelFamily::grid_custom: return "grid_custom";
  }
  return "zero";
}
KernelFamily family_from(const std::string& s) {
  for (KernelFamily f : {KernelFamily::zero, KernelFamily::riesz_grad,
                         KernelFamily::grad_newton_1d, KernelFamily::biot_savart_2d,
                         KernelFamily::sqg_riesz_2d, KernelFamily::porous_medium,
                         KernelFamily::grid_custom})
    if (s == family_name(f)) return f;
  throw std::invalid_argument("config: unknown kernel family '" + s + "'");
}

const char* lift_name(KineticLift l) {
  switch (l) {
    case KineticLift::none: return "none";
    case KineticLift::x_marginal: return "x_marginal";
    case KineticLift::v_per_x: return "v_per_x";
  }
  return "none";
}
KineticLift lift_from(const std::string& s) {
  for (KineticLift l : {KineticLift::none, KineticLift::x_marginal, KineticLift::v_per_x})
    if (s == lift_name(l)) return l;
  throw std::invalid_argument("config: unknown kernel lift '" + s + "'");
}

// Infinite exponents round-trip as the string "inf".
json num_json(double v) {
  if (std::isinf(v)) return json(v > 0.0 ? "inf" : "-inf");
  return json(v);
}
double num_from(const json& j, const char* field) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw std::invalid_argument(std::string("config: bad number in ") + field);
  }
  require(j.is_number(), std::string("config: field '") + field + "' must be a number");
  return j.get<double>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  require(j.is_object(), std::string("config: '") + where + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) { known = true; break; }
    require(known, "config: unknown field '" + item.key() + "' in " + where);
  }
}

json build_json(const SolverConfig& cfg) {
  json jk;
  jk["family"] = family_name(cfg.kernel.family);
  jk["gamma"] = cfg.kernel.gamma;
  jk["s"] = cfg.kernel.s;
  jk["sign"] = cfg.kernel.sign;
  jk["cutoff_eps"] = cfg.kernel.cutoff_eps;
  jk["lift"] = lift_name(cfg.kernel.lift);
  if (!cfg.kernel.samples.empty()) jk["samples"] = cfg.kernel.samples;

  json jg;
  if (cfg.grid) {
    jg["dim"] = cfg.grid->dim;
    jg["kinetic"] = cfg.grid->kinetic;
    jg["nx"] = cfg.grid->nx;
    jg["box_x"] = cfg.grid->box_x;
    jg["nv"] = cfg.grid->nv;
    jg["box_v"] = cfg.grid->box_v;
  }

  json jn;
  jn["kind"] = kind_name(cfg.residual_norm.kind);
  jn["p"] = num_json(cfg.residual_norm.p);
  jn["px"] = num_json(cfg.residual_norm.px);
  jn["pv"] = num_json(cfg.residual_norm.pv);
  jn["s"] = cfg.residual_norm.s;
  jn["q"] = num_json(cfg.residual_norm.q);

  json jb = json::array();
  for (const BesovChannel& c : cfg.besov_channels) {
    json e;
    e["name"] = c.name;
    e["s"] = c.s;
    e["q"] = num_json(c.q);
    e["px"] = num_json(c.px);
    e["pv"] = num_json(c.pv);
    e["g0"] = c.g0;
    e["g1"] = c.g1;
    jb.push_back(std::move(e));
  }

  json js;
  js["su"] = cfg.smallness.su;
  js["pux"] = num_json(cfg.smallness.pux);
  js["puv"] = num_json(cfg.smallness.puv);
  js["sb"] = cfg.smallness.sb;
  js["pb"] = num_json(cfg.smallness.pb);
  js["c0"] = cfg.smallness.c0;

  json j;
  j["name"] = cfg.name;
  j["mode"] = mode_name(cfg.mode);
  j["alpha"] = cfg.alpha;
  j["kernel"] = std::move(jk);
  j["grid"] = std::move(jg);
  j["horizon"] = cfg.horizon;
  j["steps"] = cfg.steps;
  j["scheme"] = scheme_name(cfg.scheme);
  j["picard_max_iters"] = cfg.picard_max_iters;
  j["picard_tol"] = cfg.picard_tol;
  j["dealias"] = dealias_name(cfg.dealias);
  j["residual_norm"] = std::move(jn);
  j["besov_channels"] = std::move(jb);
  j["smallness"] = std::move(js);
  return j;
}

int flux_axis(const PhaseGrid& g, int a) { return g.kinetic ? g.dim + a : a; }

// Monitor weight (1 ^ t)^{g0/alpha} (1 v t)^{g1/alpha}.
double time_weight(double t, double alpha, double g0, double g1) {
  double w = 1.0;
  if (g0 != 0.0) w *= std::pow(std::min(1.0, t), g0 / alpha);
  if (g1 != 0.0) w *= std::pow(std::max(1.0, t), g1 / alpha);
  return w;
}

bool all_finite(const PhaseField& f) {
  const auto& v = f.values();
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

// Trapezoid Duhamel over the lattice prefix t_0..t_k (same quadrature as the
// standalone duhamel(); inlined to reuse the shared flux series).
PhaseField duhamel_prefix(const Semigroup& S, const std::vector<PhaseField>& g,
                          int k, double h) {
  require(k >= 1, "duhamel_prefix: empty interval");
  PhaseField acc;
  for (int j = 0; j <= k; ++j) {
    const double w = (j == 0 || j == k) ? 0.5 * h : h;
    PhaseField term = S.apply(g[j], h * (k - j));
    acc = acc.empty() ? scale(term, w) : axpy(acc, w, term);
  }
  return acc;
}

PhaseField snapshot_divflux(const PhaseField& u, const SolverConfig& cfg) {
  return flux_divergence(nonlinear_flux(u, cfg.kernel, cfg.dealias));
}

std::vector<double> mild_series(const std::vector<PhaseField>& snaps,
                                const std::vector<double>& times,
                                const std::vector<PhaseField>& divflux,
                                double alpha) {
  Semigroup S(snaps.front().grid_ptr(), alpha);
  double den = lp_norm(snaps.front(), 2.0);
  if (!(den > 0.0)) den = 1.0;
  const double h = times.size() >= 2 ? times[1] - times[0] : 0.0;
  std::vector<double> out(snaps.size(), 0.0);
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    PhaseField model = S.apply(snaps.front(), times[k]);
    if (k >= 1)
      model = sub(model, duhamel_prefix(S, divflux, static_cast<int>(k), h));
    out[k] = lp_norm(sub(snaps[k], model), 2.0) / den;
  }
  return out;
}

// Monitor channels from the stored snapshots; aborted runs keep the prefix.
void finalize_run(SolverRun& run, const SolverConfig& cfg) {
  const std::size_t K = run.snapshots.size();
  run.times.resize(K);
  run.channel_names = {"mass", "l1", "l2", "linf", "min", "divmin", "mild"};
  for (const BesovChannel& c : cfg.besov_channels)
    run.channel_names.push_back(c.name);
  run.channels.assign(run.channel_names.size(), std::vector<double>(K, 0.0));
  if (K == 0) return;
  const double bad = std::numeric_limits<double>::quiet_NaN();
  const GridPtr& gp = run.snapshots.front().grid_ptr();
  std::unique_ptr<DyadicPartition> part;
  if (!cfg.besov_channels.empty())
    part = std::make_unique<DyadicPartition>(gp, cfg.alpha, gp->kinetic);
  std::vector<PhaseField> divflux(K);
  bool finite_all = true;
  double mind = kInf;
  for (std::size_t k = 0; k < K; ++k) {
    const PhaseField& u = run.snapshots[k];
    const bool finite = all_finite(u);
    finite_all = finite_all && finite;
    run.channels[0][k] = total_mass(u);
    run.channels[1][k] = lp_norm(u, 1.0);
    run.channels[2][k] = lp_norm(u, 2.0);
    run.channels[3][k] = lp_norm(u, kInf);
    const auto& v = u.values();
    const double mn = *std::min_element(v.begin(), v.end());
    run.channels[4][k] = mn;
    mind = std::min(mind, mn);
    if (!finite || cfg.kernel.family == KernelFamily::zero) {
      run.channels[5][k] = finite ? 0.0 : bad;
      divflux[k] = PhaseField::zero(gp);
    } else {
      auto H = convolve_drift(cfg.kernel, u);
      PhaseField divH;
      for (int a = 0; a < static_cast<int>(H.size()); ++a) {
        PhaseField dHa = derivative(H[a], flux_axis(*gp, a));
        divH = divH.empty() ? std::move(dHa) : add(divH, dHa);
      }
      const auto& dv = divH.values();
      run.channels[5][k] = *std::min_element(dv.begin(), dv.end());
      divflux[k] = snapshot_divflux(u, cfg);
    }
    for (std::size_t c = 0; c < cfg.besov_channels.size(); ++c) {
      const BesovChannel& bc = cfg.besov_channels[c];
      run.channels[7 + c][k] =
          finite ? time_weight(run.times[k], cfg.alpha, bc.g0, bc.g1) *
                       besov_norm(*part, u, bc.s, bc.q, bc.px, bc.pv)
                 : bad;
    }
  }
  run.min_density = mind;
  if (finite_all) {
    run.channels[6] = mild_series(run.snapshots, run.times, divflux, cfg.alpha);
  } else {
    std::fill(run.channels[6].begin(), run.channels[6].end(), bad);
  }
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void check_datum(const PhaseField& u0, const SolverConfig& cfg) {
  require(!u0.empty() && cfg.grid && u0.grid().same(*cfg.grid),
          "solve: datum does not live on the configured grid");
}

GridPtr acting_grid(const KernelSpec& spec, const GridPtr& g) {
  if (!g->kinetic) return g;
  if (spec.lift == KineticLift::x_marginal) return position_grid(*g);
  return make_grid(g->dim, false, g->nv, g->box_v);
}

}  // namespace

void validate_config(const SolverConfig& cfg) {
  require(cfg.grid != nullptr, "config: grid required");
  const PhaseGrid& g = *cfg.grid;
  require((cfg.mode == SolverMode::kinetic) == g.kinetic,
          "config: mode and grid kind disagree");
  require(cfg.alpha > 1.0 && cfg.alpha <= 2.0, "config: alpha must lie in (1,2]");
  require(cfg.horizon > 0.0, "config: horizon must be positive");
  require(cfg.steps >= 8, "config: at least 8 time steps");
  require(cfg.picard_max_iters >= 1, "config: picard_max_iters >= 1");
  require(cfg.picard_tol > 0.0, "config: picard_tol must be positive");
  if (cfg.kernel.family != KernelFamily::zero) {
    require((cfg.kernel.lift != KineticLift::none) == g.kinetic,
            "config: kernel lift and grid kind disagree");
  }
  for (const BesovChannel& c : cfg.besov_channels) {
    require(!c.name.empty(), "config: monitor channel needs a name");
    for (const char* fixed : {"mass", "l1", "l2", "linf", "min", "divmin", "mild"})
      require(c.name != fixed, "config: monitor channel shadows '" + c.name + "'");
  }
}

std::string config_to_json(const SolverConfig& cfg) {
  return build_json(cfg).dump(2) + "\n";
}

std::uint64_t config_hash(const SolverConfig& cfg) {
  const std::string s = build_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

SolverConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  check_keys(j,
             {"name", "mode", "alpha", "kernel", "grid", "horizon", "steps",
              "scheme", "picard_max_iters", "picard_tol", "dealias",
              "residual_norm", "besov_channels", "smallness"},
             "config");
  SolverConfig cfg;
  if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
  if (j.contains("mode")) cfg.mode = mode_from(j.at("mode").get<std::string>());
  if (j.contains("alpha")) cfg.alpha = num_from(j.at("alpha"), "alpha");
  if (j.contains("kernel")) {
    const json& jk = j.at("kernel");
    check_keys(jk, {"family", "gamma", "s", "sign", "cutoff_eps", "lift", "samples"},
               "kernel");
    if (jk.contains("family"))
      cfg.kernel.family = family_from(jk.at("family").get<std::string>());
    if (jk.contains("gamma")) cfg.kernel.gamma = num_from(jk.at("gamma"), "gamma");
    if (jk.contains("s")) cfg.kernel.s = num_from(jk.at("s"), "s");
    if (jk.contains("sign")) {
      cfg.kernel.sign = num_from(jk.at("sign"), "sign");
      if (cfg.kernel.sign != 1.0 && cfg.kernel.sign != -1.0)
        throw std::invalid_argument("config: kernel.sign must be +1 or -1");
    }
    if (jk.contains("cutoff_eps"))
      cfg.kernel.cutoff_eps = num_from(jk.at("cutoff_eps"), "cutoff_eps");
    if (jk.contains("lift")) cfg.kernel.lift = lift_from(jk.at("lift").get<std::string>());
    if (jk.contains("samples"))
      cfg.kernel.samples = jk.at("samples").get<std::vector<std::vector<double>>>();
  }
  if (j.contains("grid")) {
    const json& jg = j.at("grid");
    check_keys(jg, {"dim", "kinetic", "nx", "box_x", "nv", "box_v"}, "grid");
    const int dim = jg.at("dim").get<int>();
    const bool kin = jg.at("kinetic").get<bool>();
    const int nx = jg.at("nx").get<int>();
    const double bx = num_from(jg.at("box_x"), "box_x");
    const int nv = jg.contains("nv") ? jg.at("nv").get<int>() : 0;
    const double bv = jg.contains("box_v") ? num_from(jg.at("box_v"), "box_v") : 0.0;
    cfg.grid = make_grid(dim, kin, nx, bx, nv, bv);
  }
  if (j.contains("horizon")) cfg.horizon = num_from(j.at("horizon"), "horizon");
  if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
  if (j.contains("scheme")) cfg.scheme = scheme_from(j.at("scheme").get<std::string>());
  if (j.contains("picard_max_iters"))
    cfg.picard_max_iters = j.at("picard_max_iters").get<int>();
  if (j.contains("picard_tol"))
    cfg.picard_tol = num_from(j.at("picard_tol"), "picard_tol");
  if (j.contains("dealias")) cfg.dealias = dealias_from(j.at("dealias").get<std::string>());
  if (j.contains("residual_norm")) {
    const json& jn = j.at("residual_norm");
    check_keys(jn, {"kind", "p", "px", "pv", "s", "q"}, "residual_norm");
    if (jn.contains("kind"))
      cfg.residual_norm.kind = kind_from(jn.at("kind").get<std::string>());
    if (jn.contains("p")) cfg.residual_norm.p = num_from(jn.at("p"), "p");
    if (jn.contains("px")) cfg.residual_norm.px = num_from(jn.at("px"), "px");
    if (jn.contains("pv")) cfg.residual_norm.pv = num_from(jn.at("pv"), "pv");
    if (jn.contains("s")) cfg.residual_norm.s = num_from(jn.at("s"), "s");
    if (jn.contains("q")) cfg.residual_norm.q = num_from(jn.at("q"), "q");
  }
  if (j.contains("besov_channels")) {
    for (const json& e : j.at("besov_channels")) {
      check_keys(e, {"name", "s", "q", "px", "pv", "g0", "g1"}, "besov_channels");
      BesovChannel c;
      c.name = e.at("name").get<std::string>();
      if (e.contains("s")) c.s = num_from(e.at("s"), "s");
      if (e.contains("q")) c.q = num_from(e.at("q"), "q");
      if (e.contains("px")) c.px = num_from(e.at("px"), "px");
      if (e.contains("pv")) c.pv = num_from(e.at("pv"), "pv");
      if (e.contains("g0")) c.g0 = num_from(e.at("g0"), "g0");
      if (e.contains("g1")) c.g1 = num_from(e.at("g1"), "g1");
      cfg.besov_channels.push_back(std::move(c));
    }
  }
  if (j.contains("smallness")) {
    const json& js = j.at("smallness");
    check_keys(js, {"su", "pux", "puv", "sb", "pb", "c0"}, "smallness");
    if (js.contains("su")) cfg.smallness.su = num_from(js.at("su"), "su");
    if (js.contains("pux")) cfg.smallness.pux = num_from(js.at("pux"), "pux");
    if (js.contains("puv")) cfg.smallness.puv = num_from(js.at("puv"), "puv");
    if (js.contains("sb")) cfg.smallness.sb = num_from(js.at("sb"), "sb");
    if (js.contains("pb")) cfg.smallness.pb = num_from(js.at("pb"), "pb");
    if (js.contains("c0")) cfg.smallness.c0 = num_from(js.at("c0"), "c0");
  }
  validate_config(cfg);
  return cfg;
}

const std::vector<double>& run_channel(const SolverRun& run,
                                       const std::string& name) {
  for (std::size_t c = 0; c < run.channel_names.size(); ++c)
    if (run.channel_names[c] == name) return run.channels[c];
  throw std::invalid_argument("run: no monitor channel named '" + name + "'");
}

io::CsvTable monitor_table(const SolverRun& run) {
  io::CsvTable t;
  t.header.push_back("time");
  for (const std::string& n : run.channel_names) t.header.push_back(n);
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    std::vector<double> row;
    row.reserve(1 + run.channels.size());
    row.push_back(run.times[k]);
    for (const auto& ch : run.channels) row.push_back(ch[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

double field_norm(const PhaseField& f, const NormSpec& n, double alpha) {
  require(!f.empty(), "field_norm: empty field");
  switch (n.kind) {
    case NormSpec::lp:
      return lp_norm(f, n.p);
    case NormSpec::mixed:
      return mixed_lp_norm(f, n.px, n.pv);
    case NormSpec::besov: {
      DyadicPartition P(f.grid_ptr(), alpha, f.grid().kinetic);
      return besov_norm(P, f, n.s, n.q, n.px, n.pv);
    }
  }
  return 0.0;
}

std::vector<PhaseField> nonlinear_flux(const PhaseField& u,
                                       const KernelSpec& spec,
                                       DealiasRule rule) {
  require(!u.empty(), "flux: empty density");
  const GridPtr& g = u.grid_ptr();
  if (spec.family == KernelFamily::zero)
    return std::vector<PhaseField>(g->dim, PhaseField::zero(g));
  std::vector<PhaseField> drift = convolve_drift(spec, u);
  for (const PhaseField& H : drift)
    if (!all_finite(H))
      throw std::domain_error("flux: non-finite drift field");
  const bool mask = rule == DealiasRule::two_thirds;
  const PhaseField ud = mask ? dealias(u) : u;
  std::vector<PhaseField> F;
  F.reserve(drift.size());
  for (PhaseField& H : drift) {
    PhaseField prod = multiply(mask ? dealias(H) : H, ud);
    F.push_back(mask ? dealias(prod) : std::move(prod));
  }
  return F;
}

PhaseField flux_divergence(const std::vector<PhaseField>& flux) {
  require(!flux.empty() && !flux.front().empty(), "flux_divergence: empty flux");
  const PhaseGrid& g = flux.front().grid();
  require(static_cast<int>(flux.size()) == g.dim,
          "flux_divergence: one component per velocity direction");
  PhaseField acc;
  for (int a = 0; a < static_cast<int>(flux.size()); ++a) {
    PhaseField da = derivative(flux[a], flux_axis(g, a));
    acc = acc.empty() ? std::move(da) : add(acc, da);
  }
  return acc;
}

SolverRun picard_solve(const PhaseField& u0, const SolverConfig& cfg) {
  validate_config(cfg);
  require(cfg.scheme == Scheme::global_picard, "picard_solve: scheme mismatch");
  check_datum(u0, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  SolverRun run;
  run.config_hash = config_hash(cfg);
  const int n = cfg.steps;
  const double h = cfg.horizon / n;
  run.times.resize(n + 1);
  for (int k = 0; k <= n; ++k) run.times[k] = h * k;
  Semigroup S(u0.grid_ptr(), cfg.alpha);
  std::vector<PhaseField> freeflow(n + 1);
  freeflow[0] = u0;
  for (int k = 1; k <= n; ++k) freeflow[k] = S.apply(u0, run.times[k]);
  std::vector<PhaseField> cur = freeflow;
  int grow = 0;
  for (int it = 1; it <= cfg.picard_max_iters; ++it) {
    run.iterations = it;
    std::vector<PhaseField> g(n + 1);
    try {
      for (int k = 0; k <= n; ++k) g[k] = snapshot_divflux(cur[k], cfg);
    } catch (const std::domain_error& e) {
      run.diverged = true;
      run.note = e.what();
      break;
    }
    std::vector<PhaseField> next(n + 1);
    next[0] = freeflow[0];
    for (int k = 1; k <= n; ++k)
      next[k] = sub(freeflow[k], duhamel_prefix(S, g, k, h));
    double r = 0.0;
    for (int k = 0; k <= n; ++k)
      r = std::max(r, field_norm(sub(next[k], cur[k]), cfg.residual_norm,
                                 cfg.alpha));
    const double prev =
        run.residual_history.empty() ? -1.0 : run.residual_history.back();
    if (prev >= 0.0)
      run.contraction_ratios.push_back(prev > 0.0 ? r / prev : 0.0);
    run.residual_history.push_back(r);
    cur = std::move(next);
    if (!std::isfinite(r)) {
      run.diverged = true;
      run.note = "non-finite iteration residual";
      break;
    }
    if (r <= cfg.picard_tol) {
      run.converged = true;
      break;
    }
    grow = (prev >= 0.0 && r > prev) ? grow + 1 : 0;
    if (grow >= 3) {
      run.diverged = true;
      run.note = "iteration residuals grew three times in a row";
      break;
    }
  }
  run.snapshots = std::move(cur);
  finalize_run(run, cfg);
  run.wall_seconds = elapsed_since(t0);
  return run;
}

SolverRun march_solve(const PhaseField& u0, const SolverConfig& cfg) {
  validate_config(cfg);
  require(cfg.scheme == Scheme::exp_march, "march_solve: scheme mismatch");
  check_datum(u0, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  SolverRun run;
  run.config_hash = config_hash(cfg);
  const int n = cfg.steps;
  const double h = cfg.horizon / n;
  run.times.resize(n + 1);
  for (int k = 0; k <= n; ++k) run.times[k] = h * k;
  Semigroup S(u0.grid_ptr(), cfg.alpha);
  run.snapshots.reserve(n + 1);
  run.snapshots.push_back(u0);
  const bool free_run = cfg.kernel.family == KernelFamily::zero;
  for (int k = 0; k < n; ++k) {
    const PhaseField& uk = run.snapshots.back();
    PhaseField unext;
    if (free_run) {
      unext = S.apply(uk, h);
    } else {
      PhaseField gk;
      try {
        gk = snapshot_divflux(uk, cfg);
        PhaseField Pu = S.apply(uk, h);
        PhaseField Pg = S.apply(gk, h);
        PhaseField pred = axpy(Pu, -h, Pg);
        PhaseField gp = snapshot_divflux(pred, cfg);
        unext = axpy(axpy(std::move(Pu), -0.5 * h, Pg), -0.5 * h, gp);
      } catch (const std::domain_error& e) {
        run.aborted = true;
        run.note = e.what();
        break;
      }
    }
    const double li = lp_norm(unext, kInf);
    const double li0 = lp_norm(uk, kInf);
    if (!std::isfinite(li) || li > 10.0 * li0) {
      run.aborted = true;
      run.note = "blow-up guard: sup norm jumped more than 10x in one step";
      break;
    }
    run.snapshots.push_back(std::move(unext));
    run.iterations = k + 1;
  }
  run.converged = !run.aborted &&
                  run.snapshots.size() == static_cast<std::size_t>(n + 1);
  finalize_run(run, cfg);
  run.wall_seconds = elapsed_since(t0);
  return run;
}

SolverRun solve(const PhaseField& u0, const SolverConfig& cfg) {
  return cfg.scheme == Scheme::global_picard ? picard_solve(u0, cfg)
                                             : march_solve(u0, cfg);
}

double mild_residual(const SolverRun& run, const SolverConfig& cfg) {
  validate_config(cfg);
  require(!run.snapshots.empty(), "mild_residual: empty run");
  std::vector<PhaseField> divflux(run.snapshots.size());
  for (std::size_t k = 0; k < run.snapshots.size(); ++k)
    divflux[k] = snapshot_divflux(run.snapshots[k], cfg);
  const auto series = mild_series(run.snapshots, run.times, divflux, cfg.alpha);
  return *std::max_element(series.begin(), series.end());
}

double weak_residual(const SolverRun& run, const SolverConfig& cfg,
                     const std::vector<PhaseField>& test_fns) {
  validate_config(cfg);
  require(!run.snapshots.empty(), "weak_residual: empty run");
  require(!test_fns.empty(), "weak_residual: need at least one test function");
  const GridPtr& gp = run.snapshots.front().grid_ptr();
  const PhaseGrid& g = *gp;
  const std::size_t K = run.snapshots.size();
  const double h = K >= 2 ? run.times[1] - run.times[0] : 0.0;
  std::vector<std::vector<PhaseField>> F(K);
  for (std::size_t k = 0; k < K; ++k)
    F[k] = nonlinear_flux(run.snapshots[k], cfg.kernel, cfg.dealias);

  const auto inner = [&](const PhaseField& a, const PhaseField& b) {
    const auto& va = a.values();
    const auto& vb = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
    return g.cell * s;
  };

  // -(-Delta_v)^{alpha/2} phi as a spectral multiplier over velocity axes
  // (all axes on nondegenerate grids).
  const auto generator_diffusion = [&](const PhaseField& phi) {
    std::vector<std::complex<double>> m(g.size);
    for_each_point(g, [&](std::size_t flat, const int* idx) {
      double r2 = 0.0;
      for (int a = 0; a < g.naxes(); ++a) {
        if (g.kinetic && !g.is_velocity_axis(a)) continue;
        const double xi = g.freq(a, idx[a]);
        r2 += xi * xi;
      }
      m[flat] = -std::pow(r2, 0.5 * cfg.alpha);
    });
    return multiply_spectrum(phi, m);
  };

  double worst = 0.0;
  for (const PhaseField& phi : test_fns) {
    require(!phi.empty() && phi.grid().same(g),
            "weak_residual: test function grid mismatch");
    PhaseField Gphi = generator_diffusion(phi);
    if (g.kinetic) {
      for (int a = 0; a < g.dim; ++a) {
        std::vector<double> coords(g.size);
        for_each_point(g, [&](std::size_t flat, const int* idx) {
          coords[flat] = g.coord(g.dim + a, idx[g.dim + a]);
        });
        PhaseField va = PhaseField::from_values(gp, std::move(coords));
        Gphi = add(Gphi, multiply(va, derivative(phi, a)));
      }
    }
    std::vector<PhaseField> gradv(g.dim);
    for (int a = 0; a < g.dim; ++a) gradv[a] = derivative(phi, flux_axis(g, a));

    std::vector<double> integrand(K);
    for (std::size_t k = 0; k < K; ++k) {
      double s = inner(run.snapshots[k], Gphi);
      for (int a = 0; a < g.dim; ++a) s += inner(F[k][a], gradv[a]);
      integrand[k] = s;
    }
    const double base = inner(run.snapshots.front(), phi);
    double acc = 0.0;
    for (std::size_t k = 1; k < K; ++k) {
      acc += 0.5 * h * (integrand[k - 1] + integrand[k]);
      worst = std::max(worst,
                       std::abs(inner(run.snapshots[k], phi) - base - acc));
    }
  }
  return worst;
}

double smallness_margin(const PhaseField& u0, const KernelSpec& spec,
                        const SolverConfig& cfg) {
  const SmallnessSpec& sm = cfg.smallness;
  require(sm.c0 > 0.0, "smallness: threshold c0 not calibrated");
  require(sm.pux >= 1.0, "smallness: data norm indices not configured");
  require(!u0.empty(), "smallness: empty datum");
  require(!u0.grid().kinetic || sm.puv >= 1.0,
          "smallness: velocity index not configured");
  double z;
  {
    DyadicPartition P(u0.grid_ptr(), cfg.alpha, u0.grid().kinetic);
    z = besov_norm(P, u0, sm.su, kInf, sm.pux, sm.puv);
  }
  double kb = 0.0;
  if (spec.family != KernelFamily::zero) {
    const GridPtr ag = acting_grid(spec, u0.grid_ptr());
    for (const auto& [j, nrm] : kernel_besov_profile(spec, ag, sm.pb))
      kb = std::max(kb, std::pow(2.0, sm.sb * j) * nrm);
  }
  return sm.c0 - z * kb;
}

DecayFit decay_rate(const SolverRun& run, const std::string& channel,
                    double t_lo, double t_hi) {
  require(std::isfinite(t_lo) && std::isfinite(t_hi) && t_lo < t_hi,
          "decay_rate: degenerate window");
  const std::vector<double>& ch = run_channel(run, channel);
  std::vector<double> ts, vs;
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    const double t = run.times[k];
    if (t >= t_lo && t <= t_hi && t > 0.0 && ch[k] > 0.0) {
      ts.push_back(t);
      vs.push_back(ch[k]);
    }
  }
  require(ts.size() >= 5, "decay_rate: need at least five samples in window");
  const LineFit f = fit_loglog(ts, vs);
  return DecayFit{f.slope, f.r2, static_cast<int>(ts.size())};
}

StabilityReport stability_compare(const SolverRun& a, const SolverRun& b,
                                  double input_distance,
                                  const SolverConfig& cfg) {
  require(a.snapshots.size() == b.snapshots.size() && !a.snapshots.empty(),
          "stability: runs have different lattices");
  require(a.snapshots.front().grid().same(b.snapshots.front().grid()),
          "stability: runs live on different grids");
  require(input_distance >= 0.0, "stability: negative input distance");
  StabilityReport rep;
  rep.times = a.times;
  rep.ratios.resize(a.snapshots.size());
  bool all_zero = true;
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    require(std::abs(a.times[k] - b.times[k]) <= 1e-12,
            "stability: runs sample different times");
    const double d = field_norm(sub(a.snapshots[k], b.snapshots[k]),
                                cfg.residual_norm, cfg.alpha);
    all_zero = all_zero && d == 0.0;
    rep.ratios[k] = input_distance > 0.0 ? d / input_distance : d;
  }
  // Zero input distance reports absolute deviations plus the equality flag.
  rep.exact_equal = input_distance == 0.0 && all_zero;
  rep.max_ratio = *std::max_element(rep.ratios.begin(), rep.ratios.end());
  return rep;
}

SolverConfig preset_config(const std::string& name) {
  SolverConfig cfg;
  cfg.name = name;
  if (name == "nse2d") {
    // Vorticity form: the drift is the Biot-Savart velocity, alpha = 2.
    cfg.mode = SolverMode::nondegenerate;
    cfg.alpha = 2.0;
    cfg.kernel.family = KernelFamily::biot_savart_2d;
    cfg.grid = make_grid(2, false, 128, 8.0 * M_PI);
    cfg.horizon = 1.0;
    cfg.steps = 16;
    cfg.scheme = Scheme::exp_march;
    cfg.besov_channels.push_back({"b05", 0.5, kInf, 2.0, 2.0, 0.0, 0.0});
    // c0 thresholds: largest probed amplitude whose Picard iteration still
    // contracts on the preset grid (amplitude-doubling sweep + bisection;
    // flips at mass 88..96 / 36..40 / 10..12 / 104..112 respectively).
    cfg.smallness = {0.0, 2.0, 2.0, 0.0, kInf, 1.2045e1};
  } else if (name == "sqg2d") {
    cfg.mode = SolverMode::nondegenerate;
    cfg.alpha = 1.5;
    cfg.kernel.family = KernelFamily::sqg_riesz_2d;
    cfg.grid = make_grid(2, false, 64, 2.0 * M_PI);
    cfg.horizon = 0.5;
    cfg.steps = 8;
    cfg.scheme = Scheme::exp_march;
    cfg.besov_channels.push_back({"b05", 0.5, kInf, 2.0, 2.0, 0.0, 0.0});
    cfg.smallness = {0.0, 2.0, 2.0, 0.0, kInf, 2.1140e2};
  } else if (name == "vpfp1d") {
    // Kinetic 1-D with the screened Coulomb force acting on the x-marginal.
    cfg.mode = SolverMode::kinetic;
    cfg.alpha = 2.0;
    cfg.kernel.family = KernelFamily::grad_newton_1d;
    cfg.kernel.lift = KineticLift::x_marginal;
    cfg.grid = make_grid(1, true, 64, 20.0, 64, 20.0);
    cfg.horizon = 0.75;
    cfg.steps = 12;
    cfg.scheme = Scheme::global_picard;
    cfg.picard_max_iters = 20;
    cfg.picard_tol = 1e-8;
    cfg.besov_channels.push_back({"wb025", 0.25, kInf, 2.0, 2.0, 0.5, 0.0});
    cfg.smallness = {0.0, 2.0, 2.0, 0.0, kInf, 1.5971e0};
  } else if (name == "pme1d") {
    // Kinetic porous-medium pressure acting in velocity at each position.
    cfg.mode = SolverMode::kinetic;
    cfg.alpha = 1.5;
    cfg.kernel.family = KernelFamily::porous_medium;
    cfg.kernel.s = 0.75;
    cfg.kernel.sign = -1.0;
    cfg.kernel.lift = KineticLift::v_per_x;
    cfg.grid = make_grid(1, true, 32, 4.0 * M_PI, 64, 20.0);
    cfg.horizon = 0.5;
    cfg.steps = 8;
    cfg.scheme = Scheme::exp_march;
    cfg.besov_channels.push_back({"wb025", 0.25, kInf, 2.0, 2.0, 0.5, 0.0});
    cfg.smallness = {0.0, 2.0, 2.0, 0.0, kInf, 8.3617e0};
  } else {
    throw std::invalid_argument("preset: unknown name '" + name + "'");
  }
  validate_config(cfg);
  return cfg;
}

PhaseField preset_initial(const SolverConfig& cfg, double amplitude) {
  require(cfg.grid != nullptr, "preset_initial: config has no grid");
  PhaseField f;
  double base = 1.0;  // canonical mass at amplitude 1
  if (cfg.name == "nse2d") {
    f = gaussian(cfg.grid, {0.0, 0.0}, {1.0, 1.0});
  } else if (cfg.name == "sqg2d") {
    f = add(gaussian(cfg.grid, {-0.8, 0.3}, {0.6, 0.6}),
            gaussian(cfg.grid, {0.7, -0.5}, {0.8, 0.8}, 0.7));
  } else if (cfg.name == "vpfp1d") {
    // Mass 3.5 contracts with ratio ~0.37; the 4x datum (mass 14) sits past
    // the calibrated threshold and the iteration is flagged divergent.
    f = gaussian(cfg.grid, {0.0, 0.0}, {2.0, 1.2});
    base = 3.5;
  } else if (cfg.name == "pme1d") {
    f = gaussian(cfg.grid, {0.0, 0.0}, {1.5, 1.2});
  } else {
    throw std::invalid_argument("preset_initial: unknown preset '" + cfg.name + "'");
  }
  return scale(f, amplitude * base / total_mass(f));
}

}  // namespace knfp
