// Mean-field cavity/spin-ensemble dynamics in the frame rotating at omega0:
//
//   d alpha/dt = sqrt(kappa_c) beta_in - (kappa/2) alpha - i sum_m g_m w_m S+_m
//   d S+/dt    = -i delta S+ - i g S_z alpha - S+/T2
//   d S_z/dt   = 4 g Im(alpha* S+) - (S_z - 1)/T1
//
// with a_out = sqrt(kappa_c) alpha - beta_in. S_z = +1 is the ground state and
// |S+|^2 + S_z^2/4 is conserved by the coherent part.

#pragma once

#include <complex>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spinmem/ensemble.hpp"
#include "spinmem/sequence.hpp"

namespace spinmem {

struct TraceEvent {
  enum class Kind { segment_start, ideal_rotation, skip, forced_skip, end };
  Kind kind = Kind::segment_start;
  double time = 0.0;
  int segment = -1;
  double duration = 0.0;  ///< length of a skipped interval
};

struct Trace {
  std::vector<double> times;
  std::vector<std::complex<double>> alpha;    ///< sqrt(photons)
  std::vector<std::complex<double>> a_out;    ///< sqrt(photons/s)
  std::vector<std::complex<double>> beta_in;  ///< sqrt(photons/s)
  std::vector<int> segment_id;
  std::vector<TraceEvent> events;

  std::size_t size() const { return times.size(); }
  /// Nominal sample spacing of the uniform time grid.
  double sample_interval = 0.0;
};

/// Columns t_s, alpha_re, alpha_im, aout_re, aout_im, segment_id.
void write_trace_csv(std::ostream& out, const Trace& trace);

struct IntegratorOptions {
  double tolerance = 1e-8;       ///< relative
  double abs_tolerance = 1e-12;  ///< on alpha and on every Bloch component
  double max_step = 0.0;         ///< 0: limited only by the sample grid
  double sample_interval = 0.0;  ///< 0: 1/(20 kappa(0))
  /// Analytic skipping is used for the rest of a delay once the field has
  /// settled, when at least this much of the delay remains. <0: 10/kappa(0).
  double free_evolution_threshold = -1.0;
  double field_floor = 1e-8;  ///< |alpha|^2 below which the field counts as settled
  double min_settle = -1.0;   ///< integrate at least this long into a delay; <0: 10/kappa(0)
  double max_settle = -1.0;   ///< skip regardless after this long; <0: 100/kappa(0)
  double bloch_tolerance = 1e-6;
  bool skip_delays = true;

  void validate() const;
};

struct EvolutionState {
  std::complex<double> alpha{0.0, 0.0};
  std::vector<SpinPacket> packets;
  double time = 0.0;
};

struct EvolveResult {
  Trace trace;
  EvolutionState final_state;
};

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs `program` from t = 0 starting with an empty cavity.
EvolveResult evolve(const SequenceProgram& program, std::vector<SpinPacket> packets,
                    const CavityParams& cavity, const IntegratorOptions& options = {});

/// Runs `program` from `initial` (program times are offset by initial.time).
EvolveResult evolve(const SequenceProgram& program, EvolutionState initial,
                    const CavityParams& cavity, const IntegratorOptions& options = {});

/// Effective coherence time min(T2, 2 T1): keeps every packet inside the
/// Bloch ball while relaxing.
double effective_t2(const SpinPacket& packet);

/// Free precession and relaxation over `dt` with no field acting on the spins.
void free_evolution_skip(std::vector<SpinPacket>& packets, double dt);

/// Same, also decaying the cavity field. When `program` is given, throws if
/// any driving segment overlaps [state.time, state.time + dt].
void free_evolution_skip(EvolutionState& state, const CavityParams& cavity, double dt,
                         const SequenceProgram* program = nullptr);

/// Rotation of every Bloch vector by `angle` about (cos phase, sin phase, 0),
/// right-handed.
void apply_ideal_pulse(std::vector<SpinPacket>& packets, double angle, double axis_phase);

enum class SteadyStateMode { storage, retrieval_single_pi, retrieval_two_pi };

/// Closed-form steady-state intra-cavity amplitudes for a weak drive.
std::complex<double> steady_state_amplitudes(double cooperativity, double kappa_c, double kappa,
                                             std::complex<double> beta, SteadyStateMode mode);

/// Pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> values);

using TraceReadout = std::function<std::complex<double>(const Trace&)>;

/// Re-runs the sequence template with `parameter` bound to each value and
/// returns readout(trace) for each run.
std::vector<std::complex<double>> rabi_experiment(std::string_view sequence_template,
                                                  const std::string& parameter,
                                                  std::span<const double> values,
                                                  const std::vector<SpinPacket>& packets,
                                                  const CavityParams& cavity,
                                                  const TraceReadout& readout,
                                                  const IntegratorOptions& options = {});

}  // namespace spinmem
