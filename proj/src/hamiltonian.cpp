#include "spinmem/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace spinmem {

namespace {

constexpr int kElectronDim = 2;
constexpr int kNuclearDim = 10;

using Eigen::MatrixXd;

struct AngularMomentum {
  MatrixXd jz;
  MatrixXd jplus;
};

// Basis ordered by descending m.
AngularMomentum angular_momentum(double j) {
  const int dim = static_cast<int>(std::lround(2.0 * j + 1.0));
  AngularMomentum out{MatrixXd::Zero(dim, dim), MatrixXd::Zero(dim, dim)};
  for (int k = 0; k < dim; ++k) {
    const double m = j - k;
    out.jz(k, k) = m;
    if (k > 0) {
      // <m+1| J+ |m>
      out.jplus(k - 1, k) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
    }
  }
  return out;
}

SpinMatrix kron(const MatrixXd& a, const MatrixXd& b) {
  SpinMatrix out;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

SpinOperators make_operators() {
  const auto s = angular_momentum(SpinSystemParams::electron_spin);
  const auto i = angular_momentum(SpinSystemParams::nuclear_spin);
  const MatrixXd e_id = MatrixXd::Identity(kElectronDim, kElectronDim);
  const MatrixXd n_id = MatrixXd::Identity(kNuclearDim, kNuclearDim);
  const MatrixXd s_minus = s.jplus.transpose();
  const MatrixXd i_minus = i.jplus.transpose();

  SpinOperators ops;
  ops.sz = kron(s.jz, n_id);
  ops.iz = kron(e_id, i.jz);
  ops.sx = kron(0.5 * (s.jplus + s_minus), n_id);
  ops.ix = kron(e_id, 0.5 * (i.jplus + i_minus));
  // Sy Iy = -(S+ - S-)(I+ - I-)/4
  ops.sy_iy = -0.25 * kron(s.jplus - s_minus, i.jplus - i_minus);
  ops.total_mz = ops.sz + ops.iz;
  return ops;
}

void require_field(double b0) {
  if (!(b0 >= 0.0) || !std::isfinite(b0)) {
    std::ostringstream msg;
    msg << "magnetic field B0 must be finite and non-negative (got " << b0 << " T)";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

void SpinSystemParams::validate() const {
  if (!(gamma_e > 0.0)) throw std::invalid_argument("gamma_e must be positive");
  if (!(hyperfine_a > 0.0)) throw std::invalid_argument("hyperfine constant A must be positive");
  if (!std::isfinite(gamma_n)) throw std::invalid_argument("gamma_n must be finite");
}

const SpinOperators& spin_operators() {
  static const SpinOperators ops = make_operators();
  return ops;
}

int LevelSet::index_of(LevelLabel label) const {
  for (int k = 0; k < SpinSystemParams::dimension; ++k) {
    if (labels[k] == label) return k;
  }
  std::ostringstream msg;
  msg << "no level |F=" << label.f << ", m=" << label.m << ">";
  throw std::out_of_range(msg.str());
}

SpinMatrix build_hamiltonian(const SpinSystemParams& params, double b0) {
  params.validate();
  require_field(b0);
  const auto& ops = spin_operators();
  // (S (x) 1)(1 (x) I) = S (x) I
  const SpinMatrix s_dot_i = ops.sx * ops.ix + ops.sy_iy + ops.sz * ops.iz;
  SpinMatrix h = params.gamma_e * b0 * ops.sz + params.gamma_n * b0 * ops.iz +
                 params.hyperfine_a * s_dot_i;
  // Symmetric to rounding already; make it exact.
  return 0.5 * (h + h.transpose());
}

LevelSet level_set(const SpinSystemParams& params, double b0) {
  const SpinMatrix h = build_hamiltonian(params, b0);
  Eigen::SelfAdjointEigenSolver<SpinMatrix> solver(h);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("symmetric eigensolver failed to converge");
  }
  SpinMatrix vectors = solver.eigenvectors();
  Eigen::Matrix<double, 20, 1> values = solver.eigenvalues();
  const auto& ops = spin_operators();
  constexpr int n = SpinSystemParams::dimension;

  // Inside (near-)degenerate clusters the solver returns an arbitrary basis;
  // rotate it onto eigenstates of S_z + I_z, which commutes with H.
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  const double cluster_tol = 1e-9 * scale;
  for (int start = 0; start < n;) {
    int stop = start + 1;
    while (stop < n && values(stop) - values(stop - 1) <= cluster_tol) ++stop;
    const int size = stop - start;
    if (size > 1) {
      const Eigen::MatrixXd block = vectors.middleCols(start, size);
      const Eigen::MatrixXd mz = block.transpose() * ops.total_mz * block;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sub(mz);
      if (sub.info() != Eigen::Success) {
        throw std::runtime_error("eigensolver failed inside degenerate manifold");
      }
      vectors.middleCols(start, size) = block * sub.eigenvectors();
    }
    start = stop;
  }

  std::array<int, n> order{};
  std::array<double, n> rayleigh{};
  for (int k = 0; k < n; ++k) {
    rayleigh[k] = vectors.col(k).dot(h * vectors.col(k));
  }
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rayleigh[a] < rayleigh[b]; });

  LevelSet out;
  out.params = params;
  out.field = b0;
  std::map<int, std::vector<int>> by_m;
  for (int k = 0; k < n; ++k) {
    Eigen::Matrix<double, 20, 1> v = vectors.col(order[k]);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.eigenvectors.col(k) = v;
    out.energies[k] = rayleigh[order[k]];
    const double m_expect = v.dot(ops.total_mz * v);
    const int m = static_cast<int>(std::lround(m_expect));
    if (std::abs(m_expect - m) > 1e-6) {
      throw std::runtime_error("level is not an eigenstate of S_z + I_z");
    }
    by_m[m].push_back(k);
  }
  // Within a fixed m the states never cross: the lower one continues
  // adiabatically from the F=4 manifold.
  for (const auto& [m, members] : by_m) {
    if (members.size() == 2) {
      out.labels[members[0]] = {4, m};
      out.labels[members[1]] = {5, m};
    } else if (members.size() == 1 && std::abs(m) == 5) {
      out.labels[members[0]] = {5, m};
    } else {
      throw std::runtime_error("unexpected multiplicity while labelling levels");
    }
  }
  return out;
}

namespace {

double frequency_between(const LevelSet& levels, LevelLabel lower, LevelLabel upper) {
  return (levels.energies[levels.index_of(upper)] - levels.energies[levels.index_of(lower)]) /
         kTwoPi;
}

std::pair<double, double> difference_bracket(double b0, double step) {
  const double lo = std::max(0.0, b0 - step);
  return {lo, b0 + step};
}

}  // namespace

std::vector<Transition> esr_transitions(const LevelSet& levels, double gradient_step) {
  if (!(gradient_step > 0.0)) throw std::invalid_argument("gradient step must be positive");
  const auto [b_lo, b_hi] = difference_bracket(levels.field, gradient_step);
  const LevelSet below = level_set(levels.params, b_lo);
  const LevelSet above = level_set(levels.params, b_hi);
  const auto& sx = spin_operators().sx;

  std::vector<Transition> out;
  for (int m = -4; m <= 4; ++m) {
    for (int dm : {-1, +1}) {
      const LevelLabel lower{4, m};
      const LevelLabel upper{5, m + dm};
      const int li = levels.index_of(lower);
      const int ui = levels.index_of(upper);
      Transition t;
      t.lower = lower;
      t.upper = upper;
      t.frequency_hz = frequency_between(levels, lower, upper);
      t.sx_element = std::abs(levels.eigenvectors.col(li).dot(sx * levels.eigenvectors.col(ui)));
      t.gradient_hz_per_t =
          (frequency_between(above, lower, upper) - frequency_between(below, lower, upper)) /
          (b_hi - b_lo);
      out.push_back(t);
    }
  }
  return out;
}

double transition_frequency(const SpinSystemParams& params, TransitionId id, double b0) {
  return frequency_between(level_set(params, b0), id.lower, id.upper);
}

double transition_gradient(const SpinSystemParams& params, TransitionId id, double b0,
                           double step) {
  require_field(b0);
  const auto [lo, hi] = difference_bracket(b0, step);
  return (transition_frequency(params, id, hi) - transition_frequency(params, id, lo)) /
         (hi - lo);
}

ClockPoint find_clock_transition(const SpinSystemParams& params, TransitionId id, double b_lo,
                                 double b_hi, double gradient_tolerance) {
  require_field(b_lo);
  require_field(b_hi);
  if (!(b_hi > b_lo)) throw std::invalid_argument("clock search bracket must satisfy B_lo < B_hi");
  double g_lo = transition_gradient(params, id, b_lo);
  const double g_hi = transition_gradient(params, id, b_hi);
  if (g_lo * g_hi > 0.0) {
    std::ostringstream msg;
    msg << "df/dB0 does not change sign on [" << b_lo << ", " << b_hi << "] T (gradients "
        << g_lo << " and " << g_hi << " Hz/T); no clock transition bracketed";
    throw std::invalid_argument(msg.str());
  }
  double lo = b_lo;
  double hi = b_hi;
  double mid = 0.5 * (lo + hi);
  double g_mid = transition_gradient(params, id, mid);
  for (int iter = 0; iter < 200 && std::abs(g_mid) >= gradient_tolerance; ++iter) {
    if ((g_mid < 0.0) == (g_lo < 0.0)) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
    }
    mid = 0.5 * (lo + hi);
    g_mid = transition_gradient(params, id, mid);
  }
  if (std::abs(g_mid) >= gradient_tolerance) {
    throw std::runtime_error("clock transition search did not reach gradient tolerance");
  }
  const LevelSet levels = level_set(params, mid);
  const auto& sx = spin_operators().sx;
  ClockPoint out;
  out.field = mid;
  out.frequency_hz = frequency_between(levels, id.lower, id.upper);
  out.sx_element = std::abs(levels.eigenvectors.col(levels.index_of(id.lower))
                                .dot(sx * levels.eigenvectors.col(levels.index_of(id.upper))));
  out.gradient_hz_per_t = g_mid;
  return out;
}

void write_transition_csv(std::ostream& out, double b0, std::span<const Transition> rows,
                          bool header) {
  if (header) out << "B0_T,lowerF,lowerM,upperF,upperM,freq_Hz,sx,dfdB_Hz_per_T\n";
  const auto old_precision = out.precision(15);
  for (const auto& t : rows) {
    out << b0 << ',' << t.lower.f << ',' << t.lower.m << ',' << t.upper.f << ',' << t.upper.m
        << ',' << t.frequency_hz << ',' << t.sx_element << ',' << t.gradient_hz_per_t << '\n';
  }
  out.precision(old_precision);
}

}  // namespace spinmem
