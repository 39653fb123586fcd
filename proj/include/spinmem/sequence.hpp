// Pulse-sequence model, text DSL and builders for echo-based memory
// protocols.
//
// DSL (one statement per line, '#' starts a comment):
//
//   pulse gaussian beta=<f> t0=<dur> [phase=<f>] [trunc=<f>]
//   pulse square   amp=<f> dur=<dur> [phase=<f>]
//   pulse ideal    angle=<f> [phase=<f>]
//   delay <dur>
//   acquire <dur>
//   set detuning <f>[k|M|G][Hz]
//   set repetition <dur>
//   let <name> = <f>
//
// <dur> is a number with a unit suffix n, u, m or s. Numeric fields accept
// simple products/quotients of numbers, `pi` and named parameters (bound by
// `let` or by the caller), e.g. `angle=pi/2` or `amp=A`. Segments are laid
// out back to back in file order.

#pragma once

#include <complex>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spinmem {

struct GaussianPulse {
  double beta = 0.0;  ///< peak amplitude, sqrt(photons/s)
  double t0 = 0.0;    ///< envelope exp[-((t - tc)/t0)^2]
  double truncation = 4.0;  ///< support is +-truncation*t0
};
struct SquarePulse {
  double amplitude = 0.0;  ///< sqrt(photons/s)
  double duration = 0.0;
};
struct Delay {
  double duration = 0.0;
};
struct Acquire {
  double duration = 0.0;
};
/// Instantaneous rotation of every spin packet; `phase` selects the axis.
struct IdealRotation {
  double angle = 0.0;
};

using SegmentKind = std::variant<GaussianPulse, SquarePulse, Delay, Acquire, IdealRotation>;

struct PulseSegment {
  SegmentKind kind;
  double phase = 0.0;  ///< drive phase (beta -> beta e^{i phase}) or rotation axis phase
  double start = 0.0;

  double duration() const;
  double end() const { return start + duration(); }
  double center() const { return start + 0.5 * duration(); }
  bool emits() const;
  /// beta_in(t) in the frame of the drive carrier; zero outside the segment.
  std::complex<double> envelope(double t) const;
};

struct SequenceProgram {
  std::vector<PulseSegment> segments;
  double repetition_time = 0.0;      ///< 0 when unspecified
  double carrier_detuning_hz = 0.0;  ///< drive frequency minus omega0 / 2pi

  double carrier_detuning() const;   ///< rad/s
  double duration() const;
  /// Appends a segment starting where the previous one ends.
  PulseSegment& append(SegmentKind kind, double phase = 0.0);
  void validate() const;
};

class SequenceParseError : public std::runtime_error {
 public:
  SequenceParseError(int line, int column, const std::string& message);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

using ParameterMap = std::map<std::string, double, std::less<>>;

SequenceProgram parse_sequence(std::string_view text, const ParameterMap& parameters = {});

/// Canonical text form; parse_sequence(print_sequence(p)) reproduces p exactly.
std::string print_sequence(const SequenceProgram& program);

/// n_in = integral of |beta_in(t)|^2 over the segment support (Simpson rule).
double photon_calibration(const PulseSegment& segment, int intervals = 4000);

/// beta^2 t0 sqrt(pi/2) erf(sqrt(2) truncation).
double gaussian_photons(double beta, double t0, double truncation = 4.0);

/// Peak amplitude of an untruncated Gaussian carrying `n_in` photons.
double gaussian_beta_for_photons(double n_in, double t0);

/// first - tau - refocus - tau - echo, with tau measured between segment
/// centres and an acquisition window centred on the echo.
SequenceProgram hahn_echo_program(double tau, const PulseSegment& first,
                                  const PulseSegment& refocus, double acquire_window);

struct MemoryTrainOptions {
  double t0 = 10.0e-6;
  double truncation = 4.0;
  PulseSegment refocus{IdealRotation{3.141592653589793}, 0.0, 0.0};
  /// Extra acquisition margin on both sides of the echo train; defaults to
  /// the truncated length of one input pulse.
  double acquire_margin = -1.0;
};

/// Train of `n_pulses` Gaussian inputs of `n_in` photons each, spaced by
/// `spacing` between centres, followed by one refocusing pulse centred `tau`
/// after the first input. Input k (centre t_k relative to the first) echoes
/// at 2 tau - t_k.
SequenceProgram memory_train_program(int n_pulses, double spacing, std::span<const double> phases,
                                     double n_in, double tau, const MemoryTrainOptions& options = {});

/// Indices of segments that drive the resonator.
std::vector<std::size_t> emitting_segments(const SequenceProgram& program);

}  // namespace spinmem
