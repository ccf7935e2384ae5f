#include "cqed/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/analysis.hpp"
#include "cqed/config.hpp"
#include "cqed/correlator.hpp"
#include "cqed/dynamics.hpp"
#include "cqed/ensemble.hpp"
#include "cqed/error.hpp"
#include "cqed/model.hpp"
#include "cqed/nonmarkov.hpp"
#include "cqed/oracle.hpp"
#include "cqed/parallel.hpp"
#include "cqed/trajectories.hpp"
#include "cqed/units.hpp"

extern char** environ;

namespace cqed {
namespace {

struct Key {
  std::string key;
  std::string fallback;
  std::string help;
};

using Keys = std::vector<Key>;

Keys model_keys(const std::string& eps = "0.05") {
  return {{"g_mhz", "3.2", "single-atom coupling g/2pi at the antinode [MHz]"},
          {"kappa_mhz", "4.5", "cavity field decay rate kappa/2pi [MHz]"},
          {"gamma_mhz", "6.0", "atomic decay rate gamma/2pi [MHz]"},
          {"eps_over_kappa", eps, "drive amplitude in units of kappa"},
          {"delta_c_mhz", "0", "cavity-drive detuning [MHz]"},
          {"delta_a_mhz", "0", "atom-drive detuning [MHz]"}};
}

const Keys kTauKeys{{"tau.max_us", "1.5", "largest delay [us]"}, {"tau.step_us", "0.005", "delay step [us]"}};

const Keys kGeometryKeys{{"geometry.waist_um", "25", "mode waist [um]"},
                         {"geometry.wavelength_um", "0.78", "wavelength [um]"},
                         {"geometry.half_x_um", "50", "box half-width along x [um]"},
                         {"geometry.half_y_um", "50", "box half-width along y [um]"},
                         {"geometry.z_extent_um", "1.56", "box length along the axis [um]"}};

const Keys kBeamKeys{{"beam.jitter_kappa", "2.5", "cavity detuning jitter half-range in units of kappa"},
                     {"beam.zeeman_offset_mhz", "5", "detuning of the second sublevel [MHz]"},
                     {"beam.zeeman_scale", "1", "relative weight of the second sublevel (0 = off)"},
                     {"beam.contrast", "1", "background contrast factor"},
                     {"beam.cutoff", "0.01", "drop atoms below this fraction of g"},
                     {"beam.realizations", "200", "beam realizations per point"}};

Keys concat(std::initializer_list<Keys> parts) {
  Keys out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// "beam.target_n_eff" -> "--beam-target-n-eff"
std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  std::replace(f.begin() + 2, f.end(), '.', '-');
  std::replace(f.begin() + 2, f.end(), '_', '-');
  return f;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(' '), e = cell.find_last_not_of(' ');
    if (b == std::string::npos) throw InputError("config key '" + key + "': empty list entry");
    cell = cell.substr(b, e - b + 1);
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
      throw InputError("config key '" + key + "': not a number: '" + cell + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InputError("config key '" + key + "': empty list");
  return out;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string join(const std::vector<double>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : std::string{}) + format_double(v[i]);
  return s;
}

// Everything a subcommand needs after argument parsing.
struct Run {
  std::string command;
  Config cfg;
  unsigned workers = 0;
  std::vector<std::string> inputs;
  std::string streams;
  std::ostringstream body;  // CSV payload after the common header
  std::string notes;        // extra "# key: value" lines
  int status = kExitOk;

  void note(const std::string& key, const std::string& value) { notes += "# " + key + ": " + value + "\n"; }
  double num(const std::string& key) const { return cfg.get_double(key, 0.0); }
  std::uint64_t count(const std::string& key) const { return cfg.get_u64(key, 0); }
};

std::vector<double> tau_grid(const Run& r) {
  const double t_max = r.num("tau.max_us"), step = r.num("tau.step_us");
  if (!(step > 0.0) || !(t_max > 0.0)) throw InputError("tau.max_us and tau.step_us must be positive");
  const double n = std::round(t_max / step);
  if (n < 1.0 || n > 1e6) throw InputError("delay grid must have between 2 and 1e6 points");
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = step * static_cast<double>(i);
  return t;
}

double atom_number(const Run& r) {
  const double n = r.num("n_atoms");
  if (!(n >= 0.0) || !std::isfinite(n)) throw InputError("n_atoms must be a finite number >= 0");
  return n;
}

void write_trace(Run& r, const CorrelationTrace& trace) { write_trace_csv(r.body, trace, r.notes); r.notes.clear(); }

void cmd_params(Run& r) {
  const auto p = RateParams::from_config(r.cfg);
  p.validate();
  const double n = atom_number(r);
  const auto d = derive(p, n);
  const auto [gamma_p, kappa_p] = purcell_rates(p, n);
  const std::vector<double> zero{0.0};
  const std::vector<DetuningClass> cls{DetuningClass::identical(p.g_max, n, p.delta_a)};
  const double g2_0 = g2_regression(p, cls, zero).g2[0];
  const std::vector<std::pair<std::string, double>> rows{
      {"n_atoms", n},
      {"c1", d.c1},
      {"cooperativity", d.c},
      {"c1_prime", d.c1_prime},
      {"n_sat", d.n_sat},
      {"delta_alpha_ratio", d.delta_alpha_ratio},
      {"omega_vr_re_mhz", rad_per_us_to_mhz(d.omega_vr.real())},
      {"omega_vr_im_mhz", rad_per_us_to_mhz(d.omega_vr.imag())},
      {"collective_coupling_mhz", rad_per_us_to_mhz(d.collective_coupling)},
      {"oscillation_threshold", oscillation_threshold(p)},
      {"purcell_gamma_mhz", rad_per_us_to_mhz(gamma_p)},
      {"purcell_kappa_mhz", rad_per_us_to_mhz(kappa_p)},
      {"g2_0", g2_0}};
  r.body << r.notes << "quantity,value\n";
  for (const auto& [k, v] : rows) r.body << k << ',' << format_double(v) << '\n';
}

void cmd_g2_closed(Run& r) {
  const auto p = RateParams::from_config(r.cfg);
  p.validate();
  const auto tau = tau_grid(r);
  write_trace(r, g2_closed_form(p, derive(p, atom_number(r)), Eigen::Map<const Eigen::VectorXd>(
                                                                   tau.data(), static_cast<Eigen::Index>(tau.size()))));
}

void cmd_g2_refined(Run& r) {
  const auto p = RateParams::from_config(r.cfg);
  p.validate();
  const auto geom = ModeGeometry::from_config(r.cfg);
  auto beam = BeamConfig::from_config(r.cfg);
  beam.workers = r.workers;
  write_trace(r, averaged_g2(geom, beam, p, tau_grid(r)));
}

void cmd_spectrum(Run& r) {
  const auto p = RateParams::from_config(r.cfg);
  const double n = atom_number(r);
  const double span = mhz_to_rad_per_us(r.num("spectrum.span_mhz"));
  const auto points = r.count("spectrum.points");
  if (!(span > 0.0) || points < 3 || points > 1'000'000)
    throw InputError("spectrum needs span_mhz > 0 and 3 to 1e6 points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(points - 1);
  const std::vector<DetuningClass> cls{DetuningClass::identical(p.g_max, n, p.delta_a)};
  const auto sp = transmission_spectrum(p, cls, grid);
  std::vector<double> peaks;
  for (double x : sp.peaks) peaks.push_back(rad_per_us_to_mhz(x));
  r.note("peaks_mhz", join(peaks, ';'));
  r.note("split", sp.split ? "true" : "false");
  r.note("separation_mhz", format_double(rad_per_us_to_mhz(sp.separation)));
  r.note("two_g_sqrt_n_mhz", format_double(2.0 * rad_per_us_to_mhz(p.g_max) * std::sqrt(n)));
  r.body << r.notes << "drive_detuning_mhz,intensity\n";
  for (Eigen::Index i = 0; i < sp.drive_detuning.size(); ++i)
    r.body << format_double(rad_per_us_to_mhz(sp.drive_detuning[i])) << ',' << format_double(sp.intensity[i]) << '\n';
}

void cmd_synthesize(Run& r) {
  if (r.streams.empty()) throw InputError("synthesize needs --streams PREFIX for the click files");
  const auto p = RateParams::from_config(r.cfg);
  const auto n = r.count("n_atoms");
  const std::vector<oracle::Atom> atoms(n, oracle::Atom{p.g_max, p.delta_a});
  const auto traj = TrajectoryConfig::from_config(r.cfg);
  const auto format = r.cfg.get("synth.format").value_or("cqts");
  if (format != "cqts" && format != "csv") throw InputError("synth.format must be cqts or csv");
  const auto s = mcwf_synthesize(p, atoms, traj);
  const double expected = expected_detected_rate(p, atoms, traj);
  r.note("emissions", std::to_string(s.emissions));
  r.note("atomic_jumps", std::to_string(s.atomic_jumps));
  r.note("background_clicks", std::to_string(s.background));
  r.note("expected_rate_per_us", format_double(expected));
  r.note("streams", r.streams);
  r.body << r.notes << "detector,file,clicks,rate_per_us\n";
  for (const auto* st : {&s.first, &s.second}) {
    const std::string path = r.streams + ".det" + std::to_string(st->detector) + "." + format;
    if (format == "csv")
      write_stream_csv(*st, path);
    else
      write_stream(*st, path);
    r.body << st->detector << ',' << path << ',' << st->timestamps.size() << ',' << format_double(st->rate()) << '\n';
  }
}

ClickStream load_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open stream file '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::string_view(magic, 4) == "CQTS";
  in.close();
  return binary ? read_stream(path) : read_stream_csv(path);
}

void cmd_correlate(Run& r) {
  auto cc = CorrelatorConfig::from_config(r.cfg);
  cc.workers = r.workers;
  const auto factor = r.count("corr.rebin");
  const bool cross = cc.mode == CorrelatorMode::Cross;
  if (cross && r.inputs.size() != 2) throw InputError("cross mode needs two stream files");
  if (!cross && r.inputs.size() != 1) throw InputError("auto mode takes one stream file");
  for (const auto& in : r.inputs) r.note("input", in);
  const auto s1 = load_stream(r.inputs[0]);
  const std::optional<ClickStream> s2 = cross ? std::optional(load_stream(r.inputs[1])) : std::nullopt;
  auto trace = correlate(s1, s2, cc);
  if (factor != 1) trace = rebin(trace, factor);
  write_trace(r, trace);
}

void cmd_fit(Run& r) {
  if (r.inputs.size() != 1) throw InputError("fit takes one trace file");
  r.note("input", r.inputs[0]);
  const auto trace = read_trace_csv(r.inputs[0]);
  FitOptions opts;
  const double window = r.num("fit.window_us");
  if (window < 0.0) throw InputError("fit.window_us must be >= 0 (0 picks the window from the data)");
  if (window > 0.0) opts.window_end = window;
  const auto f = fit_inverted_lorentzian(trace, opts);
  const Eigen::Vector3d err = f.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.note("chi2_reduced", format_double(f.chi2_reduced));
  r.note("window_end_us", format_double(f.window_end));
  r.note("points", std::to_string(f.points));
  r.note("iterations", std::to_string(f.iterations));
  r.note("bunched", f.bunched ? "true" : "false");
  r.body << r.notes << "parameter,value,stderr\n";
  r.body << "c," << format_double(f.c) << ',' << format_double(err[0]) << '\n';
  r.body << "a0," << format_double(f.a0) << ',' << format_double(err[1]) << '\n';
  r.body << "hwhm_us," << format_double(f.w) << ',' << format_double(err[2]) << '\n';
  r.body << "speed_per_us," << format_double(f.speed) << ',' << format_double(f.speed_err) << '\n';
}

void cmd_sweep(Run& r) {
  const auto p = RateParams::from_config(r.cfg);
  const auto targets = parse_list("sweep.targets_mhz", *r.cfg.get("sweep.targets_mhz"));
  const auto geom = ModeGeometry::from_config(r.cfg);
  auto beam = BeamConfig::from_config(r.cfg);
  beam.workers = r.workers;
  SweepOptions opts;
  opts.tau_grid = tau_grid(r);
  opts.batches = r.count("sweep.batches");
  const auto res = speed_sweep(targets, geom, beam, p, opts);
  const auto& lr = res.regression;
  r.note("slope_per_us_per_mhz", format_double(lr.slope));
  r.note("slope_err", format_double(lr.slope_err));
  r.note("intercept_per_us", format_double(lr.intercept));
  r.note("intercept_err", format_double(lr.intercept_err));
  r.note("regression_chi2_reduced", format_double(lr.chi2_reduced));
  r.body << r.notes << "omega_vr_mhz,n_eff,speed_per_us,speed_err,a0,hwhm_us,c,fit_chi2_reduced\n";
  for (const auto& pt : res.points)
    r.body << format_double(pt.omega_vr_mhz) << ',' << format_double(pt.n_eff) << ',' << format_double(pt.speed) << ','
           << format_double(pt.speed_err) << ',' << format_double(pt.fit.a0) << ',' << format_double(pt.fit.w) << ','
           << format_double(pt.fit.c) << ',' << format_double(pt.fit.chi2_reduced) << '\n';
}

void cmd_blp(Run& r) {
  const auto p = RateParams::from_config(r.cfg);
  const auto grid = parse_list("blp.n_eff", *r.cfg.get("blp.n_eff"));
  const auto geom = ModeGeometry::from_config(r.cfg);
  auto beam = BeamConfig::from_config(r.cfg);
  beam.workers = r.workers;
  const auto curve = blp_vs_coupling(geom, beam, p, grid);
  r.body << r.notes << "omega_vr_mhz,blp_measure,variant,n_eff,theta,quadrature,population_pair,coherence_pair\n";
  for (const auto& pt : curve) {
    for (const auto& [name, b] : {std::pair{"averaged", &pt.averaged}, std::pair{"max_coupled", &pt.max_coupled}})
      r.body << format_double(pt.omega_vr_mhz) << ',' << format_double(b->measure) << ',' << name << ','
             << format_double(pt.n_eff) << ',' << format_double(b->theta) << ',' << format_double(b->quadrature)
             << ',' << format_double(b->population_pair) << ',' << format_double(b->coherence_pair) << '\n';
  }
}

struct OracleCase {
  std::string name;
  std::vector<oracle::Atom> atoms;
  double delta_c = 0.0;
};

// Couplings in units of g, detunings in units of kappa; every case is run with
// the cavity on resonance and detuned by 0.8 kappa.
std::vector<OracleCase> oracle_matrix(const RateParams& p) {
  const double g = p.g_max, k = p.kappa;
  const std::vector<std::pair<std::string, std::vector<oracle::Atom>>> base{
      {"empty", {}},
      {"one_resonant", {{g, 0.0}}},
      {"one_detuned", {{g, 2.5 * k}}},
      {"two_half_strength", {{g / std::sqrt(2.0), 0.0}, {g / std::sqrt(2.0), 0.0}}},
      {"two_unequal", {{g, -1.0 * k}, {0.4 * g, 2.0 * k}}},
      {"three_unequal", {{0.3 * g, 0.0}, {0.9 * g, 1.2 * k}, {0.6 * g, -2.5 * k}}},
      {"three_strong", {{g, 0.5 * k}, {g, -0.5 * k}, {0.7 * g, 0.0}}}};
  std::vector<OracleCase> out;
  for (double dc : {0.0, 0.8 * k})
    for (const auto& [name, atoms] : base) out.push_back({name, atoms, dc});
  return out;
}

void cmd_oracle_check(Run& r) {
  const auto p0 = RateParams::from_config(r.cfg);
  const double tol = r.num("oracle.tolerance");
  const auto tau = tau_grid(r);
  const auto cases = oracle_matrix(p0);
  std::vector<double> diff(cases.size());
  parallel_for(cases.size(), r.workers, [&](std::size_t i) {
    auto p = p0;
    p.delta_c += cases[i].delta_c;
    std::vector<DetuningClass> cls;
    for (const auto& a : cases[i].atoms) cls.push_back({a.coupling, a.detuning, 1.0});
    if (cls.empty()) cls.push_back({0.0, 0.0, 1.0});
    const auto exact = oracle::g2_exact(p, cases[i].atoms, tau);
    const auto fast = g2_regression(p, cls, tau);
    diff[i] = (exact.g2 - fast.g2).cwiseAbs().maxCoeff();
  });
  const double worst = *std::max_element(diff.begin(), diff.end());
  r.note("max_abs_diff", format_double(worst));
  r.note("tolerance", format_double(tol));
  r.body << r.notes << "case,n_atoms,delta_c_mhz,max_abs_diff,pass\n";
  for (std::size_t i = 0; i < cases.size(); ++i)
    r.body << cases[i].name << ',' << cases[i].atoms.size() << ','
           << format_double(rad_per_us_to_mhz(p0.delta_c + cases[i].delta_c)) << ',' << format_double(diff[i]) << ','
           << (diff[i] < tol ? "true" : "false") << '\n';
  if (!(worst < tol)) r.status = kExitNumerical;
}

struct Command {
  std::string name;
  std::string help;
  Keys keys;
  void (*run)(Run&);
};

std::vector<Command> commands() {
  const Keys n_atoms{{"n_atoms", "1", "atom number (may be fractional)"}};
  return {
      {"params", "derived constants for the given rates", concat({model_keys(), n_atoms}), cmd_params},
      {"g2-closed", "closed-form g2(tau) on resonance", concat({model_keys(), n_atoms, kTauKeys}), cmd_g2_closed},
      {"g2-refined", "ensemble-averaged g2(tau) for an atomic beam",
       concat({model_keys(), kTauKeys, kGeometryKeys, kBeamKeys,
               {{"beam.target_n_eff", "1", "mean effective atom number"}}}),
       cmd_g2_refined},
      {"spectrum", "steady transmission versus drive detuning",
       concat({model_keys(), n_atoms,
               {{"spectrum.span_mhz", "40", "scan half-range [MHz]"},
                {"spectrum.points", "4001", "scan points"}}}),
       cmd_spectrum},
      {"synthesize", "quantum-trajectory click streams for two detectors",
       concat({model_keys(),
               {{"n_atoms", "1", "number of atoms at full coupling (0 to 4)"},
                {"traj.duration_us", "10000", "recorded time [us]"},
                {"traj.efficiency", "0.3", "detection efficiency"},
                {"traj.background_rate", "0", "background clicks over both detectors [1/us]"},
                {"traj.split_ratio", "0.5", "fraction of clicks on the first detector"},
                {"traj.dead_time_us", "0", "detector dead time [us]"},
                {"traj.burn_in_us", "-1", "settling time before recording (negative: automatic)"},
                {"synth.format", "cqts", "stream file format: cqts or csv"}}}),
       cmd_synthesize},
      {"correlate", "coincidence histogram of one or two click streams",
       {{"corr.bin_width_ns", "10", "bin width [ns]"},
        {"corr.tau_max_us", "1.5", "largest delay [us]"},
        {"corr.mode", "cross", "auto or cross"},
        {"corr.fold", "true", "fold cross histograms onto |tau|"},
        {"corr.rebin", "1", "merge this many bins after correlating"}},
       cmd_correlate},
      {"fit", "inverted-Lorentzian fit of a g2 trace",
       {{"fit.window_us", "0", "last delay in the fit [us]; 0 picks it from the data"}}, cmd_fit},
      {"sweep", "speed a0/HWHM of averaged g2 against the vacuum Rabi frequency",
       concat({model_keys(), kTauKeys, kGeometryKeys, kBeamKeys,
               {{"sweep.targets_mhz", "1.1,2.8,5.2", "target |Omega_VR|/2pi values [MHz]"},
                {"sweep.batches", "10", "realization batches for the scatter estimate"}}}),
       cmd_sweep},
      {"blp", "non-Markovianity measure versus coupling",
       concat({model_keys(), kGeometryKeys, kBeamKeys,
               {{"blp.n_eff", "0,0.1,0.3,1,3", "effective atom numbers"}}}),
       cmd_blp},
      {"oracle-check", "fast path against the master-equation oracle",
       concat({model_keys("0.01"),
               {{"tau.max_us", "1", "largest delay [us]"},
                {"tau.step_us", "0.0125", "delay step [us]"},
                {"oracle.tolerance", "0.005", "largest accepted |difference| in g2"}}}),
       cmd_oracle_check},
  };
}

// CQED_BEAM__REALIZATIONS=50 -> beam.realizations = 50
std::map<std::string, std::string> environment_overrides() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    if (entry.rfind("CQED_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos || eq == 5) continue;
    std::string key;
    for (std::size_t i = 5; i < eq; ++i) {
      if (entry[i] == '_' && i + 1 < eq && entry[i + 1] == '_') {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(entry[i])));
      }
    }
    out[key] = std::string(entry.substr(eq + 1));
  }
  return out;
}

std::string header(const Run& r) {
  std::string h = std::string("# cqed ") + kVersion + "\n";
  h += "# command: " + r.command + "\n";
  h += "# seed: " + r.cfg.get("seed").value_or("1") + "\n";
  h += "# config_hash: " + hex64(r.cfg.hash()) + "\n";
  std::stringstream ss(r.cfg.canonical_text());
  for (std::string line; std::getline(ss, line);) h += "# config: " + line + "\n";
  return h;
}

int fail(std::ostream& err, const Error& e) {
  err << "error: " << e.what() << "\n";
  return e.kind() == ErrorKind::Numerical ? kExitNumerical : kExitInput;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weak-drive cavity QED simulator: closed-form and ensemble g2, click-stream synthesis, "
               "correlation, fitting and non-Markovianity.",
               "cqed"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, out_path, seed;
  unsigned workers = 0;
  std::vector<std::string> sets;
  auto* seed_opt = app.add_option("--seed", seed, "master seed (unsigned 64-bit)");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (0: all cores); never changes results");
  app.add_option("--config", config_path, "config file (key = value, [section] headers)");
  app.add_option("--out", out_path, "output CSV (default: stdout); a file also gets a .config sidecar");
  app.add_option("--set", sets, "override any config key: --set key=value");

  const auto cmds = commands();
  struct Bound {
    const Command* cmd;
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;
  };
  std::vector<Bound> bound(cmds.size());
  std::vector<std::string> inputs;
  std::string streams;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto& b = bound[i];
    b.cmd = &cmds[i];
    b.app = app.add_subcommand(cmds[i].name, cmds[i].help);
    b.app->fallthrough();
    for (const auto& k : cmds[i].keys) {
      auto& slot = b.values[k.key];
      b.options.emplace_back(k.key, b.app->add_option(flag_name(k.key), slot, k.help + " [" + k.fallback + "]"));
    }
    if (cmds[i].name == "correlate")
      b.app->add_option("streams", inputs, "one (auto) or two (cross) stream files, binary or CSV")->required();
    if (cmds[i].name == "fit") b.app->add_option("trace", inputs, "trace CSV")->required();
    if (cmds[i].name == "synthesize")
      b.app->add_option("--streams", streams, "write PREFIX.det0.<fmt> and PREFIX.det1.<fmt>")->required();
  }

  if (argc > 1 && argv[1][0] != '-' &&
      std::none_of(cmds.begin(), cmds.end(), [&](const Command& c) { return c.name == argv[1]; })) {
    err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    return kExitInput;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitInput;
  }

  const Bound* chosen = nullptr;
  for (const auto& b : bound)
    if (b.app->parsed()) chosen = &b;
  if (!chosen) return kExitInput;

  Run r;
  r.command = chosen->cmd->name;
  r.inputs = inputs;
  r.streams = streams;
  try {
    // precedence: defaults < config file < CQED_* environment < flags
    if (!config_path.empty()) r.cfg = Config::load(config_path);
    for (const auto& [k, v] : environment_overrides()) r.cfg.set(k, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw InputError("--set expects key=value, got '" + s + "'");
      r.cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, opt] : chosen->options)
      if (opt->count() > 0) r.cfg.set(key, chosen->values.at(key));
    if (seed_opt->count() > 0) r.cfg.set("seed", seed);
    for (const auto& k : chosen->cmd->keys)
      if (!r.cfg.contains(k.key)) r.cfg.set(k.key, k.fallback);
    if (!r.cfg.contains("seed")) r.cfg.set("seed", "1");
    r.cfg.get_u64("seed", 1);

    // the worker count never enters the echoed config, so outputs do not depend on it
    r.workers = static_cast<unsigned>(r.cfg.get_u64("workers", 0));
    if (workers_opt->count() > 0) r.workers = workers;
    Config echoed;
    for (const auto& [k, v] : r.cfg.entries())
      if (k != "workers") echoed.set(k, v);
    r.cfg = echoed;

    chosen->cmd->run(r);

    const std::string text = header(r) + r.body.str();
    if (out_path.empty() || out_path == "-") {
      out << text;
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) throw InputError("cannot open '" + out_path + "' for writing");
      f << text;
      std::ofstream side(out_path + ".config", std::ios::binary);
      if (!side) throw InputError("cannot open '" + out_path + ".config' for writing");
      side << "# cqed " << kVersion << " " << r.command << "\n" << r.cfg.canonical_text();
    }
    if (r.status == kExitNumerical) err << "error: " << r.command << " exceeded its tolerance\n";
    return r.status;
  } catch (const Error& e) {
    return fail(err, e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace cqed
