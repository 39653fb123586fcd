#include "spinmem/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "spinmem/analysis.hpp"
#include "spinmem/config.hpp"
#include "spinmem/dynamics.hpp"
#include "spinmem/ensemble.hpp"
#include "spinmem/hamiltonian.hpp"
#include "spinmem/sequence.hpp"

namespace spinmem {

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct Run {
  std::string name;
  std::vector<std::string> args;
  ExperimentConfig config;
  std::filesystem::path dir;
  std::vector<std::string> outputs;

  std::ofstream open(const std::string& file) {
    std::ofstream f(dir / file, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir / file).string());
    outputs.push_back(file);
    return f;
  }

  void manifest(std::uint64_t seed) {
    std::ofstream f(dir / "manifest.txt", std::ios::binary);
    if (!f) throw ConfigError("cannot write manifest in " + dir.string());
    std::string joined;
    for (const auto& a : args) joined += a + '\n';
    f << "subcommand=" << name << '\n'
      << "version=" << kVersion << '\n'
      << "config_hash=" << hex64(fnv1a64(config.source_text)) << '\n'
      << "arguments_hash=" << hex64(fnv1a64(joined)) << '\n'
      << "seed=" << seed << '\n';
    for (const auto& o : outputs) f << "output=" << o << '\n';
  }
};

Run prepare(const std::string& name, const std::vector<std::string>& args, const Common& common) {
  Run r;
  r.name = name;
  // The output location does not affect results and stays out of the hash.
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--out") {
      ++k;
      continue;
    }
    if (args[k].starts_with("--out=")) continue;
    r.args.push_back(args[k]);
  }
  r.config = common.config_path.empty() ? ExperimentConfig::defaults() : load_config(common.config_path);
  if (common.seed) {
    r.config.discretization.seed = *common.seed;
    r.config.amplifier.seed = *common.seed;
  }
  std::string dir = r.config.output_dir.empty() ? "." : r.config.output_dir;
  if (const char* env = std::getenv("SPINMEM_OUTPUT_DIR"); env != nullptr && *env != '\0') dir = env;
  if (!common.out_dir.empty()) dir = common.out_dir;
  r.dir = dir;
  std::error_code ec;
  std::filesystem::create_directories(r.dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + r.dir.string() + ": " + ec.message());
  return r;
}

LevelLabel parse_label(const std::string& text) {
  int f = 0;
  int m = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> f >> comma >> m) || comma != ',' || !(in >> std::ws).eof()) {
    throw ConfigError("expected a level as F,m (e.g. 4,-4), got '" + text + "'");
  }
  return {f, m};
}

std::vector<SpinPacket> make_packets(const ExperimentConfig& c) {
  return discretize_ensemble(c.resolved_ensemble(), c.cavity, c.packets, c.discretization);
}

// ---------------------------------------------------------------------------

int cmd_levels(Run& run, std::ostream& out, const std::string& b_min, const std::string& b_max,
               int points) {
  const double lo = parse_si_value(b_min, "T");
  const double hi = parse_si_value(b_max, "T");
  if (points < 1 || !(hi >= lo)) throw ConfigError("need points >= 1 and b-max >= b-min");
  auto f = run.open("levels.csv");
  for (int k = 0; k < points; ++k) {
    const double b = points == 1 ? lo : lo + (hi - lo) * k / (points - 1);
    const auto rows = esr_transitions(level_set(run.config.spin, b));
    write_transition_csv(f, b, rows, k == 0);
  }
  out << "wrote " << points << " fields x 18 transitions to " << (run.dir / "levels.csv").string()
      << '\n';
  run.manifest(0);
  return exit_code::ok;
}

int cmd_clock(Run& run, std::ostream& out, const std::string& b_min, const std::string& b_max,
              const std::string& which) {
  const double lo = parse_si_value(b_min, "T");
  const double hi = parse_si_value(b_max, "T");
  std::vector<std::pair<std::string, TransitionId>> ids;
  if (which == "A" || which == "both") ids.emplace_back("A", kClockTransitionA);
  if (which == "B" || which == "both") ids.emplace_back("B", kClockTransitionB);
  if (ids.empty()) throw ConfigError("--transition must be A, B or both");
  auto f = run.open("clock.csv");
  f << "branch,lowerF,lowerM,upperF,upperM,B0_T,freq_Hz,sx,dfdB_Hz_per_T\n";
  for (const auto& [name, id] : ids) {
    const ClockPoint p = find_clock_transition(run.config.spin, id, lo, hi);
    f << name << ',' << id.lower.f << ',' << id.lower.m << ',' << id.upper.f << ',' << id.upper.m
      << ',' << fmt(p.field) << ',' << fmt(p.frequency_hz) << ',' << fmt(p.sx_element) << ','
      << fmt(p.gradient_hz_per_t) << '\n';
    out << "|" << id.lower.f << "," << id.lower.m << "> <-> |" << id.upper.f << "," << id.upper.m
        << ">: B0*=" << fmt(p.field * 1e3, "%.2f") << " mT, f*=" << fmt(p.frequency_hz * 1e-9, "%.4f")
        << " GHz, <Sx>=" << fmt(p.sx_element, "%.4f") << '\n';
  }
  run.manifest(0);
  return exit_code::ok;
}

int cmd_simulate(Run& run, std::ostream& out, std::string seq_path,
                 const std::vector<std::string>& params) {
  if (seq_path.empty()) seq_path = run.config.sequence_file;
  if (seq_path.empty()) throw ConfigError("simulate needs --seq or [sequence] file");
  std::ifstream in(seq_path);
  if (!in) throw ConfigError("cannot open sequence file '" + seq_path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  ParameterMap bindings;
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects name=value, got '" + p + "'");
    bindings[p.substr(0, eq)] = parse_si_value(p.substr(eq + 1), "");
  }
  // Sequence text participates in the manifest hash through the arguments.
  run.args.push_back(text.str());
  const SequenceProgram program = parse_sequence(text.str(), bindings);

  const auto packets = make_packets(run.config);
  const EvolveResult res = evolve(program, packets, run.config.cavity, run.config.integrator);
  {
    auto f = run.open("trace.csv");
    write_trace_csv(f, res.trace);
  }
  const double t_end = res.trace.times.empty() ? 0.0 : res.trace.times.back();
  std::vector<std::pair<std::string, double>> summary = {
      {"C", cooperativity(run.config.resolved_ensemble(), run.config.cavity)},
      {"packets", static_cast<double>(packets.size())},
      {"samples", static_cast<double>(res.trace.size())},
      {"duration_s", program.duration()},
      {"input_photons", input_energy(res.trace)},
      {"output_photons", output_energy(res.trace, 0.0, t_end)},
  };
  {
    auto f = run.open("summary.txt");
    write_summary(f, summary);
  }
  write_summary(out, summary);
  run.manifest(run.config.discretization.seed);
  return exit_code::ok;
}

int cmd_memory(Run& run, std::ostream& out, const MemoryRunOptions& opts, bool write_trace) {
  const EnsembleSpec spec = run.config.resolved_ensemble();
  const auto packets = make_packets(run.config);
  const MemoryRunResult r =
      run_memory_experiment(spec, run.config.cavity, packets, opts, run.config.integrator);
  {
    auto f = run.open("echoes.csv");
    f << "index,input_center_s,expected_s,centroid_s,amp_re,amp_im,phase_rad,mode_photons,"
         "energy_photons\n";
    for (const auto& e : r.echoes) {
      f << e.input_index << ',' << fmt(e.input_center) << ',' << fmt(e.expected_time) << ','
        << fmt(e.centroid) << ',' << fmt(e.amplitude.real()) << ',' << fmt(e.amplitude.imag())
        << ',' << fmt(std::arg(e.amplitude)) << ',' << fmt(e.photons) << ',' << fmt(e.energy)
        << '\n';
    }
  }
  if (write_trace) {
    auto f = run.open("trace.csv");
    write_trace_csv(f, r.trace);
  }
  std::vector<std::pair<std::string, double>> summary = {
      {"C", r.cooperativity},
      {"zeta", r.zeta},
      {"expected_photons", r.expected_photons},
      {"decay_factor", r.decay_factor},
      {"photons_per_echo", r.mean_photons},
      {"mode_photons_per_echo", r.mean_mode_photons},
      {"photons_per_echo_corrected", r.mean_photons_corrected},
      {"pulses", static_cast<double>(opts.pulses)},
      {"tau_s", opts.tau},
  };
  {
    auto f = run.open("summary.txt");
    write_summary(f, summary);
  }
  write_summary(out, summary);
  run.manifest(run.config.discretization.seed);
  return exit_code::ok;
}

int cmd_noise(Run& run, std::ostream& out, std::optional<double> n_id, std::optional<double> c_th,
              std::optional<double> signal, std::optional<int> shots, std::optional<double> gain) {
  AmplifierModel model = run.config.amplifier;
  if (n_id) model.n_id = *n_id;
  if (gain) model.gain = *gain;
  const EnsembleSpec spec = run.config.resolved_ensemble();
  const double c = c_th ? *c_th : cooperativity(spec, run.config.cavity);
  const int n = shots ? *shots : run.config.shots;
  const double s = signal ? *signal : 0.5;
  const NoiseSigmas sig = noise_statistics(model, c);
  const HistogramSamples h = simulate_histograms(model, s, n, c);
  const EchoMoments m = echo_moments(h);
  {
    auto f = run.open("histograms.csv");
    write_histogram_csv(f, h);
  }
  std::vector<std::pair<std::string, double>> summary = {
      {"C", c},
      {"n_id", model.n_id},
      {"gain", model.gain},
      {"shots", static_cast<double>(n)},
      {"sigma_O", sig.sigma_o},
      {"sigma_E", sig.sigma_e},
      {"sampled_sigma_O", m.sigma_o},
      {"sampled_sigma_E", m.sigma_e},
      {"mean_E_minus_O", m.mean_e - m.mean_o},
      {"n_id_from_sampled_sigma_O", n_id_from_sigma(m.sigma_o)},
  };
  {
    auto f = run.open("summary.txt");
    write_summary(f, summary);
  }
  write_summary(out, summary);
  run.manifest(model.seed);
  return exit_code::ok;
}

struct QSweepArgs {
  std::string g0 = "76";
  double spins = 1e6;
  std::string fwhm = "1M";
  double kappa = 9e5;
  std::string b_min = "0.9m";
  std::string b_max = "1.9m";
  std::string b_res = "1.4m";
  int points = 201;
  std::string lower = "4,-4";
  std::string upper = "5,-5";
};

int cmd_qsweep(Run& run, std::ostream& out, const QSweepArgs& a) {
  const double g0 = kTwoPi * parse_si_value(a.g0, "Hz");
  const double fwhm = kTwoPi * parse_si_value(a.fwhm, "Hz");
  const double lo = parse_si_value(a.b_min, "T");
  const double hi = parse_si_value(a.b_max, "T");
  const double b_res = parse_si_value(a.b_res, "T");
  if (a.points < 2 || !(hi > lo)) throw ConfigError("need points >= 2 and b-max > b-min");
  if (!(a.spins > 0.0) || !(a.kappa > 0.0)) throw ConfigError("need spins > 0 and kappa > 0");
  const TransitionId id{parse_label(a.lower), parse_label(a.upper)};
  const SpinSystemParams spin = run.config.spin;
  auto omega_s = [spin, id](double b) { return kTwoPi * transition_frequency(spin, id, b); };

  CavityParams cavity;
  cavity.omega0 = omega_s(b_res);
  // Only the total linewidth enters the loaded Q.
  cavity.kappa_c = a.kappa;
  cavity.kappa_i_fixed = 0.0;
  QSweepLine line{g0 * std::sqrt(a.spins), fwhm, omega_s};
  std::vector<double> fields;
  for (int k = 0; k < a.points; ++k) fields.push_back(lo + (hi - lo) * k / (a.points - 1));
  const auto curve = q_factor_sweep(cavity, line, fields);
  {
    auto f = run.open("qsweep.csv");
    f << "B0_T,delta_s_Hz,linewidth_per_s,Q\n";
    for (const auto& p : curve) {
      f << fmt(p.field) << ',' << fmt(p.delta_s / kTwoPi) << ',' << fmt(p.linewidth) << ','
        << fmt(p.q) << '\n';
    }
  }
  const double c = 4.0 * line.g_ens * line.g_ens / (a.kappa * fwhm);
  std::vector<std::pair<std::string, double>> summary = {
      {"omega0_Hz", cavity.omega0 / kTwoPi},
      {"g_ens_Hz", line.g_ens / kTwoPi},
      {"C", c},
      {"Q_bare", cavity.omega0 / a.kappa},
      {"q_dip_fraction", q_dip_fraction(a.kappa, line.g_ens, fwhm)},
  };
  {
    auto f = run.open("summary.txt");
    write_summary(f, summary);
  }
  write_summary(out, summary);
  run.manifest(0);
  return exit_code::ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spin-ensemble microwave memory simulator", "spinmem"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "override discretization and amplifier seeds");
  };

  std::string b_min = "0";
  std::string b_max = "35m";
  int points = 71;
  auto* levels = app.add_subcommand("levels", "ESR transition table versus B0");
  add_common(levels);
  levels->add_option("--b-min", b_min, "lowest field, e.g. 0 or 1.4m");
  levels->add_option("--b-max", b_max, "highest field");
  levels->add_option("--points", points, "number of fields");

  std::string c_min = "20m";
  std::string c_max = "35m";
  std::string which = "both";
  auto* clock = app.add_subcommand("clock", "locate the clock transitions");
  add_common(clock);
  clock->add_option("--b-min", c_min, "bracket start");
  clock->add_option("--b-max", c_max, "bracket end");
  clock->add_option("--transition", which, "A = |4,0>-|5,-1>, B = |4,-1>-|5,0>, or both");

  std::string seq;
  std::vector<std::string> params;
  auto* simulate = app.add_subcommand("simulate", "evolve a sequence file");
  add_common(simulate);
  simulate->add_option("--seq", seq, "sequence file")->check(CLI::ExistingFile);
  simulate->add_option("--param", params, "bind a sequence parameter, name=value");

  MemoryRunOptions mem;
  std::string tau = "50m";
  std::string spacing = "60u";
  std::string t0 = "10u";
  bool mem_trace = false;
  auto* memory = app.add_subcommand("memory", "multimode echo train with analysis summary");
  add_common(memory);
  memory->add_option("--pulses", mem.pulses, "number of input pulses");
  memory->add_option("--nin", mem.n_in, "photons per input pulse");
  memory->add_option("--tau", tau, "first input to refocusing pulse");
  memory->add_option("--spacing", spacing, "input pulse spacing");
  memory->add_option("--t0", t0, "Gaussian input width");
  memory->add_option("--phases", mem.phases, "input phases in rad (one per pulse)");
  memory->add_flag("--trace", mem_trace, "also write trace.csv");

  std::optional<double> n_id, c_th, signal, gain;
  std::optional<int> shots;
  auto* noise = app.add_subcommand("noise", "amplifier-noise histogram simulation");
  add_common(noise);
  noise->add_option("--n-id", n_id, "idler occupation");
  noise->add_option("--c", c_th, "thermal echo photons (default: ensemble cooperativity)");
  noise->add_option("--signal", signal, "mean echo quadrature, sqrt(photons)");
  noise->add_option("--shots", shots, "shots per window");
  noise->add_option("--gain", gain, "amplifier power gain");

  QSweepArgs qa;
  auto* qsweep = app.add_subcommand("qsweep", "resonator Q versus B0 across a Lorentzian spin line");
  add_common(qsweep);
  qsweep->add_option("--g0", qa.g0, "single-spin coupling in Hz");
  qsweep->add_option("--spins", qa.spins, "number of spins");
  qsweep->add_option("--fwhm", qa.fwhm, "line FWHM in Hz");
  qsweep->add_option("--kappa", qa.kappa, "bare resonator linewidth, 1/s");
  qsweep->add_option("--b-min", qa.b_min, "sweep start");
  qsweep->add_option("--b-max", qa.b_max, "sweep end");
  qsweep->add_option("--b-res", qa.b_res, "field at which the line is resonant with the cavity");
  qsweep->add_option("--points", qa.points, "number of fields");
  qsweep->add_option("--lower", qa.lower, "lower level F,m");
  qsweep->add_option("--upper", qa.upper, "upper level F,m");

  std::vector<const char*> argv{"spinmem"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::config_error;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    Run run = prepare(sub->get_name(), args, common);
    if (sub == levels) return cmd_levels(run, out, b_min, b_max, points);
    if (sub == clock) return cmd_clock(run, out, c_min, c_max, which);
    if (sub == simulate) return cmd_simulate(run, out, seq, params);
    if (sub == memory) {
      mem.tau = parse_si_value(tau, "s");
      mem.spacing = parse_si_value(spacing, "s");
      mem.t0 = parse_si_value(t0, "s");
      return cmd_memory(run, out, mem, mem_trace);
    }
    if (sub == noise) return cmd_noise(run, out, n_id, c_th, signal, shots, gain);
    if (sub == qsweep) return cmd_qsweep(run, out, qa);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const SequenceParseError& e) {
    err << "sequence error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const IntegrationError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_code::numerical_failure;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const std::out_of_range& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_code::numerical_failure;
  }
  err << "error: unknown subcommand\n";
  return exit_code::config_error;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run_cli(args, out, err);
}

}  // namespace spinmem
