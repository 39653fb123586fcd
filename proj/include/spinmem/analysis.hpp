// Trace analysis (mode matching, cooperativity, echo energy and timing, decay
// fits), the phase-insensitive amplifier noise model and the Q-factor sweep
// of a resonator loaded by a Lorentzian spin line.

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spinmem/dynamics.hpp"
#include "spinmem/ensemble.hpp"

namespace spinmem {

/// Normalized Gaussian mode u(t) = (2/(pi t0^2))^(1/4) exp(-((t - center)/t0)^2),
/// truncated at |t - center| = truncation * t0.
struct ModeFilter {
  double center = 0.0;
  double t0 = 0.0;
  double truncation = 5.0;

  static ModeFilter gaussian(double center, double t0, double truncation = 5.0);
  void validate() const;
  double operator()(double t) const;
  double support_begin() const { return center - truncation * t0; }
  double support_end() const { return center + truncation * t0; }
};

/// Trapezoidal integral of u(t - t_c) a_out(t) over the filter support, in
/// sqrt(photons). Throws if the support is not covered by contiguous samples.
std::complex<double> mode_match(const Trace& trace, const ModeFilter& filter);

/// Same projection applied to arbitrary samples (uniform or not).
std::complex<double> mode_match(std::span<const double> times,
                                std::span<const std::complex<double>> signal,
                                const ModeFilter& filter);

/// C = <|alpha_s|>/<|alpha_p|> - 1 over samples with t in [t_begin, t_end].
double cooperativity_from_ratio(const Trace& polarized, const Trace& saturated, double t_begin,
                                double t_end);

struct RetrievalEfficiency {
  double zeta = 0.0;               ///< amplitude efficiency 4 C kappa_c / kappa
  double energy_efficiency = 0.0;  ///< zeta^2
  bool outside_weak_coupling = false;  ///< C > 0.2: the linearized form is unreliable
};

RetrievalEfficiency retrieval_efficiency(double cooperativity, double kappa_c, double kappa);

/// Noise photons spontaneously emitted into the echo mode, n_SE = C.
double spontaneous_emission_photons(double cooperativity);

struct AmplifierModel {
  double gain = 1.0e6;  ///< power gain G
  double n_id = 0.0;    ///< idler thermal occupation
  std::uint64_t seed = 0;

  void validate() const;
};

/// Input-referred quadrature noise with X = (a + a^dagger)/2.
struct NoiseSigmas {
  double sigma_o = 0.0;  ///< off-echo window (vacuum input)
  double sigma_e = 0.0;  ///< echo window (thermal input with C photons)
};

/// delta X^2 = [G dXa^2 + (G - 1) dXid^2] / G with dXa^2 = 1/4 (vacuum) or
/// (1 + 2C)/4 (echo) and dXid^2 = (1 + 2 n_id)/4.
NoiseSigmas noise_statistics(const AmplifierModel& model, double echo_thermal_c);

/// Large-gain inversion of sigma_O: n_id = 2 sigma^2 - 1.
double n_id_from_sigma(double sigma_o);

struct HistogramSamples {
  std::vector<double> echo;  ///< window E
  std::vector<double> off;   ///< window O
};

/// Draws one input-referred quadrature per shot and window by sending
/// Gaussian input and idler quadratures through the amplifier. E has mean
/// `signal_amplitude`, O has mean 0. Requires n_shots >= 100.
HistogramSamples simulate_histograms(const AmplifierModel& model, double signal_amplitude,
                                     int n_shots, double echo_thermal_c = 0.0);

struct EchoMoments {
  double mean_e = 0.0;
  double mean_o = 0.0;
  double sigma_e = 0.0;
  double sigma_o = 0.0;
};

EchoMoments echo_moments(const HistogramSamples& samples);

/// Columns sample_index, window, value.
void write_histogram_csv(std::ostream& out, const HistogramSamples& samples);

/// Resonator linewidth with a Lorentzian spin line detuned by delta_s:
/// kappa + g_ens^2 (Gamma/2) / (delta_s^2 + Gamma^2/4). All rates in rad/s.
double loaded_linewidth(double kappa, double g_ens, double gamma_fwhm, double delta_s);

struct QSweepLine {
  double g_ens = 0.0;       ///< collective coupling, rad/s
  double gamma_fwhm = 0.0;  ///< rad/s
  std::function<double(double)> spin_frequency;  ///< omega_s(B0), rad/s
};

struct QPoint {
  double field = 0.0;
  double delta_s = 0.0;   ///< omega_s - omega0, rad/s
  double linewidth = 0.0; ///< rad/s
  double q = 0.0;
};

std::vector<QPoint> q_factor_sweep(const CavityParams& cavity, const QSweepLine& line,
                                   std::span<const double> fields);

/// Fractional Q reduction on resonance, 1 - Q(0)/Q(infinity).
double q_dip_fraction(double kappa, double g_ens, double gamma_fwhm);

struct ExponentialFit {
  double amplitude = 0.0;
  double rate = 0.0;  ///< y = amplitude exp(-rate x)
  double time_constant() const { return 1.0 / rate; }
};

/// Least squares on log y; every y must be positive.
ExponentialFit fit_exponential_decay(std::span<const double> x, std::span<const double> y);

/// Integral of |a_out|^2 over samples in [t_begin, t_end] (photons).
double output_energy(const Trace& trace, double t_begin, double t_end);

/// Integral of |beta_in|^2 over the whole trace (photons).
double input_energy(const Trace& trace);

/// |a_out|^2-weighted mean time over [t_begin, t_end].
double echo_centroid(const Trace& trace, double t_begin, double t_end);

struct EchoReport {
  int input_index = 0;
  double input_center = 0.0;
  double expected_time = 0.0;  ///< 2 t_refocus - t_k
  double centroid = 0.0;       ///< |a_out|^2-weighted arrival time
  std::complex<double> amplitude{0.0, 0.0};  ///< mode-matched, sqrt(photons)
  double photons = 0.0;        ///< |amplitude|^2
  double energy = 0.0;         ///< integral of |a_out|^2 over the slot, photons
};

/// Locates and projects the echo of each input pulse, each within a slot of
/// `slot_width` centred on its expected time, using a Gaussian mode of `t0`.
std::vector<EchoReport> analyze_echo_train(const Trace& trace, std::span<const double> input_centers,
                                           double refocus_center, double t0, double slot_width);

struct MemoryRunOptions {
  int pulses = 20;
  double n_in = 240.0;
  double tau = 50.0e-3;  ///< first input centre to refocusing pulse
  double spacing = 60.0e-6;
  double t0 = 10.0e-6;
  double truncation = 3.0;
  std::vector<double> phases;  ///< empty: k * 2.4 rad modulo 2 pi
};

struct MemoryRunResult {
  SequenceProgram program;
  Trace trace;
  std::vector<EchoReport> echoes;
  double cooperativity = 0.0;
  double zeta = 0.0;
  double expected_photons = 0.0;  ///< zeta^2 n_in
  double decay_factor = 1.0;      ///< exp(-2 (2 tau) / T2) on echo energy
  double mean_photons = 0.0;      ///< mean slot energy, including decoherence
  double mean_mode_photons = 0.0; ///< mean |mode amplitude|^2
  double mean_photons_corrected = 0.0;  ///< mean_photons / decay_factor
};

/// Runs a multimode train through the full dynamics and analyses its echoes.
MemoryRunResult run_memory_experiment(const EnsembleSpec& ensemble, const CavityParams& cavity,
                                      const std::vector<SpinPacket>& packets,
                                      const MemoryRunOptions& options,
                                      const IntegratorOptions& integrator = {});

/// Flat `key=value` lines in the given order.
void write_summary(std::ostream& out, const std::vector<std::pair<std::string, double>>& entries);

}  // namespace spinmem
