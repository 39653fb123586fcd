// Resonator and spin-ensemble description: Purcell relaxation, TLS losses,
// cooperativity and discretization of the inhomogeneous line into packets.

#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace spinmem {

/// Power-dependent internal loss from a saturable two-level-system bath:
/// kappa_i(n) = kappa_res + kappa_tls0 / sqrt(1 + n / n_sat).
struct TlsParams {
  double kappa_tls0 = 0.0;
  double n_sat = 1.0e3;
  double kappa_res = 0.0;

  void validate() const;

  /// Solves for kappa_tls0 and kappa_res so that the law passes through two
  /// measured (n_cav, kappa_i) points at fixed n_sat.
  static TlsParams from_anchors(double n_low, double kappa_low, double n_high,
                                double kappa_high, double n_sat = 1.0e3);
};

double tls_loss(const TlsParams& tls, double n_cav);

struct CavityParams {
  double omega0 = 0.0;   ///< rad/s
  double kappa_c = 0.0;  ///< external energy rate, 1/s
  std::optional<TlsParams> tls;
  std::optional<double> kappa_i_fixed;  ///< overrides the TLS model when set

  void validate() const;
  double kappa_i(double n_cav = 0.0) const;
  double kappa(double n_cav = 0.0) const { return kappa_c + kappa_i(n_cav); }
  bool power_dependent() const { return tls.has_value() && !kappa_i_fixed.has_value(); }
};

inline constexpr double kNoRelaxation = std::numeric_limits<double>::infinity();

/// Purcell T1 = kappa / (4 g^2) * [1 + (2 delta / kappa)^2]. g = 0 yields
/// kNoRelaxation.
double purcell_time(double g, double delta, double kappa);

struct SpinPacket {
  double delta = 0.0;   ///< omega_m - omega0, rad/s
  double g = 0.0;       ///< single-spin coupling, rad/s
  double weight = 1.0;  ///< number of spins represented
  std::complex<double> s_plus{0.0, 0.0};
  double s_z = 1.0;     ///< +1 is the ground state
  double t1 = kNoRelaxation;
  double t2 = kNoRelaxation;

  bool in_bloch_ball(double tolerance = 1e-9) const {
    return std::norm(s_plus) <= 0.25 * (1.0 - s_z * s_z) + tolerance;
  }
};

struct SquareLine {
  double width = 0.0;  ///< full width, rad/s
};
struct LorentzianLine {
  double fwhm = 0.0;  ///< rad/s
};
/// Absolute density table, two columns `detuning_Hz, density_spins_per_Hz`.
struct TabulatedLine {
  std::vector<double> detuning_hz;
  std::vector<double> density_per_hz;

  static TabulatedLine read_csv(std::istream& in);
  static TabulatedLine load(const std::string& path);
};
using Lineshape = std::variant<SquareLine, LorentzianLine, TabulatedLine>;

/// Tabulated coupling distribution, two columns `g_Hz, weight`.
struct CouplingTable {
  std::vector<double> g;        ///< rad/s
  std::vector<double> weights;  ///< normalized to 1

  static CouplingTable read_csv(std::istream& in);
  static CouplingTable load(const std::string& path);
};
using CouplingDistribution = std::variant<double, CouplingTable>;  // double: fixed g0, rad/s

struct EnsembleSpec {
  /// N/Gamma in spins per Hz. For a square line it is the flat density; for a
  /// Lorentzian N = spectral_density * FWHM/2pi. Ignored for tabulated lines,
  /// which carry absolute densities.
  double spectral_density = 0.0;
  Lineshape lineshape = SquareLine{};
  CouplingDistribution coupling = 0.0;
  double t2 = kNoRelaxation;
  double sz_equilibrium = 1.0;

  void validate() const;
};

/// Total number of spins represented by the line.
double total_spins(const EnsembleSpec& spec);

/// Line-centre density rho(0) in spins per (rad/s).
double center_density(const EnsembleSpec& spec);

/// Mean g^2 over the coupling distribution.
double mean_g_squared(const CouplingDistribution& coupling);

/// 4 g0^2 (N/Gamma) / kappa with N/Gamma in spins per (rad/s).
double cooperativity_formula(double g0, double n_per_gamma, double kappa);

/// Cooperativity governing the mean-field dynamics of a line broad compared
/// to kappa: 2 pi <g^2> rho(0) / kappa. Equals cooperativity_formula with
/// N/Gamma = N/FWHM for a Lorentzian line; a square line of flat density d
/// gives pi/2 times the formula evaluated at N/Gamma = d.
double cooperativity(const EnsembleSpec& spec, const CavityParams& cavity, double n_cav = 0.0);

/// Returns `spec` with its density rescaled so that cooperativity() == target.
EnsembleSpec with_cooperativity(EnsembleSpec spec, const CavityParams& cavity, double target,
                                double n_cav = 0.0);

enum class Placement {
  quantile,    ///< equal-weight packets at the (k + 1/2)/n quantiles
  uniform,     ///< evenly spaced detunings, density-proportional weights
  stratified,  ///< equal weights at a seeded random point of each quantile cell
};

struct DiscretizationOptions {
  Placement placement = Placement::quantile;
  std::uint64_t seed = 0;
  /// Half-range, in FWHM units, used when a Lorentzian is placed uniformly.
  double lorentzian_cutoff = 200.0;
};

std::vector<SpinPacket> discretize_ensemble(const EnsembleSpec& spec, const CavityParams& cavity,
                                            int n_packets, const DiscretizationOptions& options = {});

/// Cavity-filtered cooperativity of a discrete packet set, probed with a
/// Lorentzian of half-width `probe_halfwidth` (rad/s).
double packet_cooperativity(const std::vector<SpinPacket>& packets, double kappa,
                            double probe_halfwidth);

}  // namespace spinmem
