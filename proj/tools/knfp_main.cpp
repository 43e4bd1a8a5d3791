// Configuration-driven experiment runner: resolves a solver setup (preset or
// explicit), runs it, and writes a reproducible artifact tree (summary JSON,
// monitor CSV, binary snapshots, optional particle comparisons). A sweep mode
// reruns the experiment across one parameter and aggregates a summary scalar.
//
// Exit codes: 0 ok, 1 enabled acceptance check failed, 2 configuration error,
// 3 runtime blow-up or divergence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "knfp/fit.hpp"
#include "knfp/fpe.hpp"
#include "knfp/io.hpp"
#include "knfp/mckv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace knfp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBlowup = 3;

std::string hex_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_fields(const json& j, const std::string& where,
                  const std::vector<std::string>& allowed) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw std::invalid_argument("config: unknown field '" + item.key() + "' in " + where);
  }
}

struct ParticleBlock {
  bool enabled = false;
  std::vector<int> counts;
  std::vector<std::uint64_t> seeds = {1};
  double eps = 0.0;  // 0: keep the solver kernel's own cutoff
  ForceMode mode = ForceMode::binned;
  int bins = 512;
  double bandwidth = 0.0;        // 0: bandwidth_scale * n^{-1/5}
  double bandwidth_scale = 3.0;
  int substeps = 16;
};

struct Experiment {
  std::string name;
  std::string preset;  // empty when `solver` is given explicitly
  json solver;
  json overrides;  // merge-patched onto the solver json
  double amplitude = 1.0;
  json initial;  // explicit solver: list of {center, sigma, amp} bumps
  double mass = 0.0;  // > 0: normalize the explicit initial datum
  std::string out = "runs";
  std::vector<std::string> accept;
  double mild_threshold = 1e-6;
  ParticleBlock particles;
  bool has_decay = false;
  std::string decay_channel;
  double decay_lo = 0.0, decay_hi = 0.0;
  double cutoff_p = 2.0, cutoff_r = 1.0;
  json raw;
};

Experiment parse_experiment(const json& j) {
  check_fields(j, "experiment",
               {"name", "preset", "solver", "solver_overrides", "amplitude", "initial",
                "mass", "out", "accept", "mild_threshold", "particles", "decay", "cutoff"});
  Experiment e;
  e.raw = j;
  e.name = j.value("name", std::string());
  if (e.name.empty()) throw std::invalid_argument("config: experiment name is required");
  if (j.contains("preset") == j.contains("solver"))
    throw std::invalid_argument("config: give exactly one of 'preset' or 'solver'");
  if (j.contains("preset")) e.preset = j.at("preset").get<std::string>();
  if (j.contains("solver")) e.solver = j.at("solver");
  if (j.contains("solver_overrides")) e.overrides = j.at("solver_overrides");
  e.amplitude = j.value("amplitude", 1.0);
  if (j.contains("initial")) e.initial = j.at("initial");
  e.mass = j.value("mass", 0.0);
  e.out = j.value("out", std::string("runs"));
  if (j.contains("accept"))
    for (const auto& s : j.at("accept")) e.accept.push_back(s.get<std::string>());
  e.mild_threshold = j.value("mild_threshold", 1e-6);

  if (j.contains("particles")) {
    const json& p = j.at("particles");
    check_fields(p, "particles",
                 {"n", "seeds", "eps", "mode", "bins", "bandwidth", "bandwidth_scale",
                  "substeps"});
    e.particles.enabled = true;
    if (!p.contains("n")) throw std::invalid_argument("config: particles.n is required");
    if (p.at("n").is_array())
      for (const auto& v : p.at("n")) e.particles.counts.push_back(v.get<int>());
    else
      e.particles.counts.push_back(p.at("n").get<int>());
    if (p.contains("seeds")) {
      e.particles.seeds.clear();
      for (const auto& v : p.at("seeds")) e.particles.seeds.push_back(v.get<std::uint64_t>());
    }
    e.particles.eps = p.value("eps", 0.0);
    std::string mode = p.value("mode", std::string("binned"));
    if (mode == "binned")
      e.particles.mode = ForceMode::binned;
    else if (mode == "direct")
      e.particles.mode = ForceMode::direct;
    else
      throw std::invalid_argument("config: unknown particle mode '" + mode + "'");
    e.particles.bins = p.value("bins", 512);
    e.particles.bandwidth = p.value("bandwidth", 0.0);
    e.particles.bandwidth_scale = p.value("bandwidth_scale", 3.0);
    e.particles.substeps = p.value("substeps", 16);
    if (e.particles.counts.empty() || e.particles.seeds.empty())
      throw std::invalid_argument("config: particles need counts and seeds");
  }

  if (j.contains("decay")) {
    const json& d = j.at("decay");
    check_fields(d, "decay", {"channel", "t_lo", "t_hi"});
    e.has_decay = true;
    e.decay_channel = d.at("channel").get<std::string>();
    e.decay_lo = d.at("t_lo").get<double>();
    e.decay_hi = d.at("t_hi").get<double>();
  }
  if (j.contains("cutoff")) {
    const json& c = j.at("cutoff");
    check_fields(c, "cutoff", {"p", "r"});
    e.cutoff_p = c.value("p", 2.0);
    e.cutoff_r = c.value("r", 1.0);
  }
  return e;
}

SolverConfig resolve_solver(const Experiment& e, std::string* resolved_text) {
  json base;
  if (!e.preset.empty()) {
    base = json::parse(config_to_json(preset_config(e.preset)));
  } else {
    base = e.solver;
  }
  if (!e.overrides.is_null()) base.merge_patch(e.overrides);
  std::string text = base.dump(2) + "\n";
  SolverConfig cfg = config_from_json(text);
  if (resolved_text) *resolved_text = config_to_json(cfg);
  return cfg;
}

PhaseField initial_data(const Experiment& e, const SolverConfig& cfg) {
  if (!e.preset.empty()) return preset_initial(cfg, e.amplitude);
  if (e.initial.is_null())
    throw std::invalid_argument("config: explicit solver needs an 'initial' bump list");
  PhaseField f = PhaseField::zero(cfg.grid);
  for (const json& b : e.initial) {
    check_fields(b, "initial bump", {"center", "sigma", "amp"});
    std::vector<double> c = b.at("center").get<std::vector<double>>();
    std::vector<double> s = b.at("sigma").get<std::vector<double>>();
    f = axpy(f, 1.0, gaussian(cfg.grid, c, s, b.value("amp", 1.0)));
  }
  if (e.mass > 0.0) {
    double m = total_mass(f);
    require(m > 0.0, "config: initial datum has no mass to normalize");
    f = scale(f, e.mass / m);
  }
  return f;
}

std::string csv_text(const std::string& hash, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  std::ostringstream ss;
  ss << "# config=" << hash << "\n";
  for (std::size_t i = 0; i < header.size(); ++i)
    ss << (i ? "," : "") << header[i];
  ss << "\n";
  for (const auto& row : rows) ss << io::csv_line(row) << "\n";
  return ss.str();
}

void write_snapshot_atomic(const std::string& path, const PhaseField& f) {
  std::string tmp = path + ".tmp";
  io::write_snapshot(tmp, f);
  fs::rename(tmp, path);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Flatten particle states row-major per particle: positions, then velocities.
std::vector<double> flatten_states(const ParticleEnsemble& ens) {
  const int n = ens.count();
  const bool second = ens.order == ParticleOrder::second;
  const int width = second ? 2 * ens.dim : ens.dim;
  std::vector<double> flat(static_cast<std::size_t>(n) * width);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < ens.dim; ++a)
      flat[static_cast<std::size_t>(i) * width + a] = ens.x[static_cast<std::size_t>(i) * ens.dim + a];
    if (second)
      for (int a = 0; a < ens.dim; ++a)
        flat[static_cast<std::size_t>(i) * width + ens.dim + a] =
            ens.v[static_cast<std::size_t>(i) * ens.dim + a];
  }
  return flat;
}

json run_particles(const Experiment& e, const SolverConfig& cfg, const PhaseField& u0,
                   const SolverRun& run, std::uint64_t seed_offset,
                   const std::string& out_dir, const std::string& hash) {
  const ParticleBlock& pb = e.particles;
  double pde_mass = total_mass(u0);
  require(pde_mass > 0.0, "particles: PDE initial mass must be positive");

  // The (1/N) empirical sums correspond to a unit-mass density; carry the
  // PDE mass into the kernel strength and compare against the normalized field.
  KernelSpec pk = cfg.kernel;
  pk.lift = KineticLift::none;
  if (pb.eps > 0.0) pk.cutoff_eps = pb.eps;
  pk.sign *= pde_mass;
  PhaseField target = scale(run.snapshots.back(), 1.0 / pde_mass);

  StepSpec st;
  st.alpha = cfg.alpha;
  st.dt = cfg.horizon / cfg.steps;
  st.mode = pb.mode;
  st.pair_substeps = pb.substeps;
  if (pb.mode == ForceMode::binned)
    st.bin_grid = make_grid(cfg.grid->dim, false, pb.bins, cfg.grid->box_x);

  double hmax = 0.0;
  for (int a = 0; a < cfg.grid->naxes(); ++a)
    hmax = std::max(hmax, cfg.grid->spacing(a));

  std::vector<std::vector<double>> rows;
  std::vector<double> last_l1;
  ParticleEnsemble keep;
  for (int n : pb.counts) {
    double bw = pb.bandwidth > 0.0
                    ? pb.bandwidth
                    : std::max(pb.bandwidth_scale * std::pow(static_cast<double>(n), -0.2), hmax);
    last_l1.clear();
    for (std::uint64_t seed : pb.seeds) {
      ParticleEnsemble ens = sample_from_field(u0, n, seed + seed_offset);
      for (int k = 0; k < cfg.steps; ++k) ens = step_ensemble(ens, pk, st);
      ChaosStats cs = chaos_distance(ens, target, bw);
      rows.push_back({static_cast<double>(n), static_cast<double>(seed), bw, cs.l1, cs.w1});
      last_l1.push_back(cs.l1);
      if (n == pb.counts.back() && seed == pb.seeds.front()) keep = ens;
    }
  }

  io::write_text_atomic(out_dir + "/particles.csv",
                        csv_text(hash, {"n", "seed", "bandwidth", "l1", "w1"}, rows));
  if (keep.count() > 0) {
    std::vector<double> flat = flatten_states(keep);
    std::string tmp = out_dir + "/particles_final.knpc.tmp";
    io::write_particles(tmp, keep.dim, keep.order == ParticleOrder::second, flat,
                        static_cast<std::size_t>(keep.count()));
    fs::rename(tmp, out_dir + "/particles_final.knpc");
  }

  json out;
  out["rows"] = rows.size();
  out["chaos_l1"] = median_of(last_l1);
  out["kernel_scaled_by_mass"] = pde_mass;
  return out;
}

int run_experiment(const Experiment& e, const std::string& out_override, bool accept_all,
                   std::uint64_t seed_offset, int threads, json* summary_out) {
  std::string resolved;
  SolverConfig cfg = resolve_solver(e, &resolved);
  PhaseField u0 = initial_data(e, cfg);

  std::string out_dir = out_override.empty() ? e.out : out_override;
  fs::create_directories(out_dir);

  SolverRun run = solve(u0, cfg);
  std::string hash = hex_hash(run.config_hash);

  io::write_text_atomic(out_dir + "/config_resolved.json", resolved);
  io::CsvTable table = monitor_table(run);
  io::write_text_atomic(out_dir + "/monitor.csv", csv_text(hash, table.header, table.rows));
  write_snapshot_atomic(out_dir + "/initial.knfp", u0);
  if (!run.snapshots.empty())
    write_snapshot_atomic(out_dir + "/final.knfp", run.snapshots.back());

  json summary;
  summary["name"] = e.name;
  summary["config_hash"] = hash;
  summary["threads"] = threads;
  summary["seed_offset"] = seed_offset;
  summary["converged"] = run.converged;
  summary["diverged"] = run.diverged;
  summary["aborted"] = run.aborted;
  summary["iterations"] = run.iterations;
  summary["wall_seconds"] = run.wall_seconds;
  if (!run.note.empty()) summary["note"] = run.note;
  summary["min_density"] = run.min_density;
  summary["residual_history"] = run.residual_history;
  summary["contraction_ratios"] = run.contraction_ratios;

  const std::vector<double>& mass = run_channel(run, "mass");
  double drift = 0.0;
  for (double m : mass) drift = std::max(drift, std::abs(m - mass.front()));
  double mass_scale = std::max(std::abs(mass.front()), 1e-300);
  summary["mass_drift"] = drift / mass_scale;

  double mild = mild_residual(run, cfg);
  summary["mild_residual"] = mild;

  json finals;
  for (const std::string& ch : run.channel_names)
    finals[ch] = run_channel(run, ch).back();
  summary["final"] = finals;

  bool have_margin = cfg.smallness.c0 > 0.0;
  double margin = 0.0;
  if (have_margin) {
    margin = smallness_margin(u0, cfg.kernel, cfg);
    summary["margin"] = margin;
  }

  if (e.has_decay) {
    DecayFit fit = decay_rate(run, e.decay_channel, e.decay_lo, e.decay_hi);
    summary["decay"] = {{"channel", e.decay_channel},
                        {"slope", fit.slope},
                        {"r2", fit.r2},
                        {"samples", fit.samples}};
  }

  bool run_failed = run.aborted || run.diverged;
  if (e.particles.enabled && !run_failed)
    summary["particles"] = run_particles(e, cfg, u0, run, seed_offset, out_dir, hash);

  // Inline invariant suites. The margin suite only claims the sufficient
  // direction: a positive margin must come with a converged run.
  std::vector<std::string> suites = e.accept;
  if (accept_all) suites = {"conservation", "mild", "positivity", "margin"};
  json checks;
  bool any_check_failed = false;
  for (const std::string& s : suites) {
    json c;
    bool pass = false;
    if (s == "conservation") {
      pass = drift / mass_scale <= 1e-10;
      c = {{"value", drift / mass_scale}, {"threshold", 1e-10}};
    } else if (s == "mild") {
      pass = !run_failed && mild <= e.mild_threshold;
      c = {{"value", mild}, {"threshold", e.mild_threshold}};
    } else if (s == "positivity") {
      pass = run.min_density >= -1e-6;
      c = {{"value", run.min_density}, {"threshold", -1e-6}};
    } else if (s == "margin") {
      if (!have_margin) {
        pass = true;
        c = {{"value", nullptr}, {"note", "no smallness threshold configured"}};
      } else {
        pass = margin <= 0.0 || (run.converged && !run.diverged);
        c = {{"value", margin}};
      }
    } else {
      throw std::invalid_argument("config: unknown acceptance suite '" + s + "'");
    }
    c["pass"] = pass;
    checks[s] = c;
    if (!pass) any_check_failed = true;
    std::printf("check %-12s %s\n", s.c_str(), pass ? "pass" : "FAIL");
  }
  summary["checks"] = checks;

  io::write_text_atomic(out_dir + "/summary.json", summary.dump(2) + "\n");
  std::printf("run '%s': %s (%s); artifacts in %s\n", e.name.c_str(),
              run_failed ? (run.aborted ? "aborted" : "diverged") : "completed",
              hash.c_str(), out_dir.c_str());
  if (summary_out) *summary_out = summary;

  if (run_failed) return kExitBlowup;
  if (any_check_failed) return kExitCheckFailed;
  return kExitOk;
}

// Set a dotted path. Experiment-level fields go to the experiment json; all
// other paths are solver overrides (e.g. kernel.cutoff_eps, steps).
json with_parameter(const json& experiment, const std::string& param, double value) {
  static const std::vector<std::string> top = {"amplitude", "mass", "mild_threshold"};
  json j = experiment;
  std::vector<std::string> parts;
  std::stringstream ss(param);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  if (parts.empty()) throw std::invalid_argument("sweep: empty parameter path");

  json* node = nullptr;
  std::size_t start = 0;
  if (parts.size() == 1 && std::find(top.begin(), top.end(), parts[0]) != top.end()) {
    node = &j;
  } else if (parts[0] == "particles") {
    node = &j;
  } else {
    node = &j["solver_overrides"];
  }
  json* cur = node;
  for (std::size_t i = start; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
  if (parts.back() == "n" && parts.size() >= 2 && parts[parts.size() - 2] == "particles")
    (*cur)[parts.back()] = static_cast<int>(value);
  else if (parts.back() == "steps" || parts.back() == "bins" || parts.back() == "substeps" ||
           parts.back() == "picard_max_iters" || parts.back() == "nx" || parts.back() == "nv")
    (*cur)[parts.back()] = static_cast<int>(value);
  else
    (*cur)[parts.back()] = value;
  return j;
}

double metric_from(const json& summary, const std::string& metric) {
  const json* cur = &summary;
  std::stringstream ss(metric);
  std::string item;
  while (std::getline(ss, item, '.')) {
    if (!cur->contains(item)) return std::nan("");
    cur = &cur->at(item);
  }
  return cur->is_number() ? cur->get<double>() : std::nan("");
}

int sweep_experiment(const Experiment& e, const std::string& param,
                     const std::vector<double>& values, const std::string& metric,
                     const std::string& out_override, bool accept_all,
                     std::uint64_t seed_offset, int threads) {
  if (values.empty()) throw std::invalid_argument("sweep: value list is empty");
  std::string out_root = out_override.empty() ? e.out : out_override;
  fs::create_directories(out_root);

  // Kernel-cutoff rate studies do not need solver runs: the rate helper
  // evaluates the capped-kernel Besov distance across the whole eps list.
  if (metric == "cutoff_norm") {
    require(param == "kernel.cutoff_eps", "sweep: cutoff_norm sweeps kernel.cutoff_eps");
    SolverConfig cfg = resolve_solver(e, nullptr);
    GridPtr g = cfg.grid->kinetic
                    ? make_grid(cfg.grid->dim, false, cfg.grid->nx, cfg.grid->box_x)
                    : cfg.grid;
    KernelSpec spec = cfg.kernel;
    spec.lift = KineticLift::none;
    CutoffRate rate = cutoff_rate(spec, g, e.cutoff_p, e.cutoff_r, values);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < rate.eps.size(); ++i)
      rows.push_back({rate.eps[i], rate.norms[i]});
    std::string hash = hex_hash(config_hash(cfg));
    io::write_text_atomic(out_root + "/aggregate.csv",
                          csv_text(hash, {"kernel.cutoff_eps", "cutoff_norm"}, rows));
    json agg = {{"param", param},          {"metric", metric},
                {"slope", rate.slope},     {"expected", rate.expected},
                {"valid", rate.valid},     {"config_hash", hash}};
    io::write_text_atomic(out_root + "/aggregate.json", agg.dump(2) + "\n");
    std::printf("sweep %s: slope %.4f (expected %.4f)\n", param.c_str(), rate.slope,
                rate.expected);
    return kExitOk;
  }

  require(!metric.empty(), "sweep: --metric is required");
  std::vector<std::vector<double>> rows;
  std::vector<double> ms;
  int worst = kExitOk;
  for (std::size_t i = 0; i < values.size(); ++i) {
    json j = with_parameter(e.raw, param, values[i]);
    Experiment ei = parse_experiment(j);
    std::ostringstream sub;
    sub << out_root << "/" << ei.name << "_" << param << "_" << i;
    json summary;
    int code = run_experiment(ei, sub.str(), accept_all, seed_offset, threads, &summary);
    worst = std::max(worst, code);
    double m = metric_from(summary, metric);
    rows.push_back({values[i], m});
    ms.push_back(m);
  }

  std::string hash = hex_hash(config_hash(resolve_solver(e, nullptr)));
  io::write_text_atomic(out_root + "/aggregate.csv", csv_text(hash, {param, metric}, rows));
  json agg = {{"param", param}, {"metric", metric}, {"values", values},
              {"results", ms},  {"config_hash", hash}};
  bool loggable = true;
  for (std::size_t i = 0; i < values.size(); ++i)
    loggable = loggable && values[i] > 0.0 && std::isfinite(ms[i]) && ms[i] > 0.0;
  if (loggable && values.size() >= 3) {
    LineFit fit = fit_loglog(values, ms);
    agg["loglog_slope"] = fit.slope;
    agg["loglog_r2"] = fit.r2;
  }
  io::write_text_atomic(out_root + "/aggregate.json", agg.dump(2) + "\n");
  std::printf("sweep %s over %zu values: aggregate in %s\n", param.c_str(), values.size(),
              out_root.c_str());
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinetic / nondegenerate fractional Fokker-Planck experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, param, values_text, metric;
  bool accept_all = false;
  std::uint64_t seed_offset = 0;
  int threads = 1;

  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  run_cmd->add_option("--config", config_path, "experiment JSON")->required();
  run_cmd->add_option("--out", out_dir, "output directory (overrides config)");
  run_cmd->add_flag("--accept", accept_all, "enable all inline invariant suites");
  run_cmd->add_option("--seed", seed_offset, "offset added to particle seeds");
  run_cmd->add_option("--threads", threads,
                      "worker cap (numerical kernels in this build are serial)");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "rerun across one parameter");
  sweep_cmd->add_option("--config", config_path, "experiment JSON")->required();
  sweep_cmd->add_option("--param", param, "dotted parameter path")->required();
  sweep_cmd->add_option("--values", values_text, "comma-separated values")->required();
  sweep_cmd->add_option("--metric", metric, "summary scalar to aggregate");
  sweep_cmd->add_option("--out", out_dir, "output directory (overrides config)");
  sweep_cmd->add_flag("--accept", accept_all, "enable all inline invariant suites");
  sweep_cmd->add_option("--seed", seed_offset, "offset added to particle seeds");
  sweep_cmd->add_option("--threads", threads, "worker cap");

  CLI11_PARSE(app, argc, argv);

  try {
    json j = json::parse(read_text(config_path));
    Experiment e = parse_experiment(j);
    if (run_cmd->parsed())
      return run_experiment(e, out_dir, accept_all, seed_offset, threads, nullptr);

    std::vector<double> values;
    std::stringstream ss(values_text);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) values.push_back(std::stod(item));
    return sweep_experiment(e, param, values, metric, out_dir, accept_all, seed_offset,
                            threads);
  } catch (const json::exception& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return kExitConfig;
  } catch (const std::invalid_argument& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return kExitConfig;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "runtime error: %s\n", ex.what());
    return kExitBlowup;
  }
}
