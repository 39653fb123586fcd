// Experiment configuration: flat `key = value` text with [section] headers
// and unit suffixes.
//
//   [cavity]      omega0 = 7.338 GHz, kappa_c = 4e5 /s, kappa_i = 9e5 /s
//                 (or tls_kappa0, tls_n_sat, tls_kappa_res)
//   [ensemble]    lineshape = square | lorentzian | table, width = 2.07 MHz,
//                 table = line.csv, g0 = 40 Hz | coupling_table = g.csv,
//                 density = 1.0 (spins/Hz) | cooperativity = 0.035,
//                 t2 = 0.3 s, packets = 4096, placement = quantile, seed = 0
//   [spin]        gamma_e = 28 GHz/T, gamma_n = 7 MHz/T, hyperfine = 1.475 GHz
//   [sequence]    file = hahn.seq
//   [integrator]  tolerance, abs_tolerance, max_step, sample_interval,
//                 skip_threshold, field_floor, skip_delays = true|false
//   [amplifier]   gain, n_id, seed, shots
//   [output]      directory
//
// Frequencies (Hz with optional k/M/G prefix) are stored as angular rates.
// Relative file paths are resolved against the config file's directory.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "spinmem/analysis.hpp"
#include "spinmem/dynamics.hpp"
#include "spinmem/ensemble.hpp"
#include "spinmem/hamiltonian.hpp"

namespace spinmem {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "<number>[ ][prefix][unit]" where prefix is one of p n u m k M G
/// and `unit` (possibly empty) is the expected base unit, e.g.
/// parse_si_value("20m", "T") == 0.02 and parse_si_value("7.3 GHz", "Hz").
double parse_si_value(std::string_view text, std::string_view unit);

struct ExperimentConfig {
  SpinSystemParams spin;
  CavityParams cavity;
  EnsembleSpec ensemble;
  /// When set, the ensemble density is rescaled to reach this cooperativity.
  std::optional<double> target_cooperativity;
  int packets = 4096;
  DiscretizationOptions discretization;
  std::string sequence_file;
  IntegratorOptions integrator;
  AmplifierModel amplifier;
  int shots = 1000;
  std::string output_dir;
  /// Text the configuration was parsed from; empty for built-in defaults.
  std::string source_text;

  /// Clock-transition memory parameters: kappa_c = 4e5 /s, kappa_i = 9e5 /s,
  /// g0 = 40 Hz, square line of width 10 kappa at C = 0.035, T2 = 0.3 s.
  static ExperimentConfig defaults();

  EnsembleSpec resolved_ensemble() const;
  void validate() const;
};

ExperimentConfig parse_config(std::string_view text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// 64-bit FNV-1a hash, used for run manifests.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace spinmem
