// Bismuth donor spin Hamiltonian: level structure, ESR transitions and
// clock-transition search.
//
// All angular quantities are in rad/s (or rad/s/T), frequencies reported in
// transition tables are ordinary frequencies in Hz.

#pragma once

#include <array>
#include <iosfwd>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace spinmem {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SpinSystemParams {
  double gamma_e = kTwoPi * 28.0e9;       ///< electron gyromagnetic ratio, rad/s/T
  double gamma_n = kTwoPi * 7.0e6;        ///< nuclear gyromagnetic ratio, rad/s/T
  double hyperfine_a = kTwoPi * 1.475e9;  ///< hyperfine constant A, rad/s

  static constexpr double electron_spin = 0.5;
  static constexpr double nuclear_spin = 4.5;
  static constexpr int dimension = 20;

  void validate() const;
};

using SpinMatrix = Eigen::Matrix<double, 20, 20>;

/// Spin operators in the product basis |m_S, m_I>, m_S and m_I descending.
struct SpinOperators {
  SpinMatrix sz;
  SpinMatrix sx;
  SpinMatrix iz;
  SpinMatrix ix;
  /// S_y (x) I_y; real because both factors are purely imaginary.
  SpinMatrix sy_iy;
  SpinMatrix total_mz;  ///< S_z + I_z
};

const SpinOperators& spin_operators();

struct LevelLabel {
  int f = 0;
  int m = 0;

  friend bool operator==(const LevelLabel&, const LevelLabel&) = default;
};

struct LevelSet {
  SpinSystemParams params;
  double field = 0.0;                     ///< B0, tesla
  std::array<double, 20> energies{};      ///< rad/s, ascending
  SpinMatrix eigenvectors;                ///< column k is level k
  std::array<LevelLabel, 20> labels{};

  /// Index of the level carrying `label`; throws std::out_of_range if absent.
  int index_of(LevelLabel label) const;
};

struct Transition {
  LevelLabel lower;
  LevelLabel upper;
  double frequency_hz = 0.0;
  double sx_element = 0.0;          ///< |<lower|S_x|upper>|
  double gradient_hz_per_t = 0.0;   ///< df/dB0
};

struct TransitionId {
  LevelLabel lower;
  LevelLabel upper;
};

/// The two quasi-degenerate clock transitions near 27 mT.
inline constexpr TransitionId kClockTransitionA{{4, 0}, {5, -1}};
inline constexpr TransitionId kClockTransitionB{{4, -1}, {5, 0}};

inline constexpr double kDefaultGradientStep = 10.0e-6;  // tesla

SpinMatrix build_hamiltonian(const SpinSystemParams& params, double b0);

LevelSet level_set(const SpinSystemParams& params, double b0);

std::vector<Transition> esr_transitions(const LevelSet& levels,
                                        double gradient_step = kDefaultGradientStep);

double transition_frequency(const SpinSystemParams& params, TransitionId id, double b0);

/// Symmetric finite difference of transition_frequency, Hz/T.
double transition_gradient(const SpinSystemParams& params, TransitionId id, double b0,
                           double step = kDefaultGradientStep);

struct ClockPoint {
  double field = 0.0;
  double frequency_hz = 0.0;
  double sx_element = 0.0;
  double gradient_hz_per_t = 0.0;
};

/// Locates dω/dB0 = 0 inside [b_lo, b_hi] to |df/dB0| < `gradient_tolerance`
/// (Hz/T; the default is 1 kHz/mT). Throws std::invalid_argument when the
/// gradient does not change sign on the bracket.
ClockPoint find_clock_transition(const SpinSystemParams& params, TransitionId id,
                                 double b_lo, double b_hi,
                                 double gradient_tolerance = 1.0e6);

/// Columns: B0_T, lowerF, lowerM, upperF, upperM, freq_Hz, sx, dfdB_Hz_per_T.
void write_transition_csv(std::ostream& out, double b0, std::span<const Transition> rows,
                          bool header = true);

}  // namespace spinmem
