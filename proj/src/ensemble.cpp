#include "spinmem/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "spinmem/hamiltonian.hpp"

namespace spinmem {

namespace {

constexpr double kPi = std::numbers::pi;

// Reads two numeric columns; blank lines, '#' comments and one leading
// non-numeric header line are skipped.
std::vector<std::pair<double, double>> read_two_columns(std::istream& in, const char* what) {
  std::vector<std::pair<double, double>> rows;
  std::string line;
  int line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double a = 0.0;
    double b = 0.0;
    if (!(fields >> a >> b)) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      std::ostringstream msg;
      msg << what << ": malformed row at line " << line_no;
      throw std::runtime_error(msg.str());
    }
    header_allowed = false;
    rows.emplace_back(a, b);
  }
  return rows;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

double tabulated_integral_hz(const TabulatedLine& t) {
  double total = 0.0;
  for (std::size_t k = 1; k < t.detuning_hz.size(); ++k) {
    total += 0.5 * (t.density_per_hz[k] + t.density_per_hz[k - 1]) *
             (t.detuning_hz[k] - t.detuning_hz[k - 1]);
  }
  return total;
}

void validate_table(const TabulatedLine& t) {
  if (t.detuning_hz.size() < 2 || t.detuning_hz.size() != t.density_per_hz.size()) {
    throw std::invalid_argument("tabulated lineshape needs at least two rows");
  }
  for (std::size_t k = 0; k < t.detuning_hz.size(); ++k) {
    if (!std::isfinite(t.detuning_hz[k]) || !std::isfinite(t.density_per_hz[k]) ||
        t.density_per_hz[k] < 0.0) {
      throw std::invalid_argument("tabulated lineshape has a negative or non-finite density");
    }
    if (k > 0 && !(t.detuning_hz[k] > t.detuning_hz[k - 1])) {
      throw std::invalid_argument("tabulated lineshape detunings must be strictly increasing");
    }
  }
  const double total = tabulated_integral_hz(t);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("tabulated lineshape is not normalizable (zero total weight)");
  }
}

double table_density_at(const TabulatedLine& t, double detuning_hz) {
  const auto& x = t.detuning_hz;
  if (detuning_hz < x.front() || detuning_hz > x.back()) return 0.0;
  const auto it = std::upper_bound(x.begin(), x.end(), detuning_hz);
  if (it == x.end()) return t.density_per_hz.back();
  const auto k = static_cast<std::size_t>(it - x.begin());
  const double s = (detuning_hz - x[k - 1]) / (x[k] - x[k - 1]);
  return t.density_per_hz[k - 1] + s * (t.density_per_hz[k] - t.density_per_hz[k - 1]);
}

// Inverse CDF of the piecewise-linear density; returns rad/s.
class TableQuantile {
 public:
  explicit TableQuantile(const TabulatedLine& t) : table_(t) {
    cumulative_.push_back(0.0);
    for (std::size_t k = 1; k < t.detuning_hz.size(); ++k) {
      cumulative_.push_back(cumulative_.back() + 0.5 *
                                                     (t.density_per_hz[k] + t.density_per_hz[k - 1]) *
                                                     (t.detuning_hz[k] - t.detuning_hz[k - 1]));
    }
  }

  double operator()(double u) const {
    const double target = u * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    std::size_t k = static_cast<std::size_t>(it - cumulative_.begin());
    k = std::clamp<std::size_t>(k, 1, cumulative_.size() - 1);
    const double x0 = table_.detuning_hz[k - 1];
    const double width = table_.detuning_hz[k] - x0;
    const double d0 = table_.density_per_hz[k - 1];
    const double d1 = table_.density_per_hz[k];
    const double mass = target - cumulative_[k - 1];
    // width * (d0 s + (d1 - d0) s^2 / 2) = mass
    const double a = 0.5 * (d1 - d0) * width;
    const double b = d0 * width;
    double s = 0.0;
    if (std::abs(a) < 1e-14 * std::max(b, 1e-300)) {
      s = b > 0.0 ? mass / b : 0.5;
    } else {
      const double disc = std::max(0.0, b * b + 4.0 * a * mass);
      s = 2.0 * mass / (b + std::sqrt(disc));
    }
    return kTwoPi * (x0 + std::clamp(s, 0.0, 1.0) * width);
  }

 private:
  const TabulatedLine& table_;
  std::vector<double> cumulative_;
};

}  // namespace

void TlsParams::validate() const {
  if (!(kappa_tls0 >= 0.0) || !(kappa_res >= 0.0) || !(n_sat > 0.0)) {
    throw std::invalid_argument("TLS parameters must be non-negative (n_sat positive)");
  }
}

TlsParams TlsParams::from_anchors(double n_low, double kappa_low, double n_high,
                                  double kappa_high, double n_sat) {
  const double a_low = 1.0 / std::sqrt(1.0 + n_low / n_sat);
  const double a_high = 1.0 / std::sqrt(1.0 + n_high / n_sat);
  if (!(a_low > a_high)) throw std::invalid_argument("TLS anchors need n_low < n_high");
  TlsParams out;
  out.n_sat = n_sat;
  out.kappa_tls0 = (kappa_low - kappa_high) / (a_low - a_high);
  out.kappa_res = kappa_low - out.kappa_tls0 * a_low;
  out.validate();
  return out;
}

double tls_loss(const TlsParams& tls, double n_cav) {
  if (!(n_cav >= 0.0)) throw std::invalid_argument("photon number must be non-negative");
  return tls.kappa_res + tls.kappa_tls0 / std::sqrt(1.0 + n_cav / tls.n_sat);
}

void CavityParams::validate() const {
  if (!(kappa_c > 0.0)) throw std::invalid_argument("kappa_c must be positive");
  if (kappa_i_fixed && !(*kappa_i_fixed >= 0.0)) {
    throw std::invalid_argument("kappa_i must be non-negative");
  }
  if (tls) tls->validate();
}

double CavityParams::kappa_i(double n_cav) const {
  if (kappa_i_fixed) return *kappa_i_fixed;
  if (tls) return tls_loss(*tls, n_cav);
  return 0.0;
}

double purcell_time(double g, double delta, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("purcell_time: kappa must be positive");
  if (!(g >= 0.0)) throw std::invalid_argument("purcell_time: g must be non-negative");
  if (g == 0.0) return kNoRelaxation;
  const double x = 2.0 * delta / kappa;
  return kappa / (4.0 * g * g) * (1.0 + x * x);
}

TabulatedLine TabulatedLine::read_csv(std::istream& in) {
  TabulatedLine out;
  for (const auto& [x, d] : read_two_columns(in, "lineshape table")) {
    out.detuning_hz.push_back(x);
    out.density_per_hz.push_back(d);
  }
  validate_table(out);
  return out;
}

TabulatedLine TabulatedLine::load(const std::string& path) {
  auto in = open_or_throw(path);
  return read_csv(in);
}

CouplingTable CouplingTable::read_csv(std::istream& in) {
  CouplingTable out;
  double total = 0.0;
  for (const auto& [g_hz, w] : read_two_columns(in, "coupling table")) {
    if (!(g_hz >= 0.0) || !(w >= 0.0)) throw std::invalid_argument("coupling table entries must be non-negative");
    out.g.push_back(kTwoPi * g_hz);
    out.weights.push_back(w);
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("coupling table has zero total weight");
  for (auto& w : out.weights) w /= total;
  return out;
}

CouplingTable CouplingTable::load(const std::string& path) {
  auto in = open_or_throw(path);
  return read_csv(in);
}

void EnsembleSpec::validate() const {
  if (!(spectral_density >= 0.0)) throw std::invalid_argument("spectral density must be non-negative");
  std::visit(
      [](const auto& line) {
        using T = std::decay_t<decltype(line)>;
        if constexpr (std::is_same_v<T, SquareLine>) {
          if (!(line.width > 0.0)) throw std::invalid_argument("square line width must be positive");
        } else if constexpr (std::is_same_v<T, LorentzianLine>) {
          if (!(line.fwhm > 0.0)) throw std::invalid_argument("Lorentzian FWHM must be positive");
        } else {
          validate_table(line);
        }
      },
      lineshape);
  if (const auto* g0 = std::get_if<double>(&coupling); g0 && !(*g0 >= 0.0)) {
    throw std::invalid_argument("coupling g0 must be non-negative");
  }
  if (!(t2 > 0.0)) throw std::invalid_argument("T2 must be positive");
  if (!(std::abs(sz_equilibrium) <= 1.0)) throw std::invalid_argument("equilibrium S_z must lie in [-1, 1]");
}

double total_spins(const EnsembleSpec& spec) {
  return std::visit(
      [&](const auto& line) -> double {
        using T = std::decay_t<decltype(line)>;
        if constexpr (std::is_same_v<T, SquareLine>) {
          return spec.spectral_density * line.width / kTwoPi;
        } else if constexpr (std::is_same_v<T, LorentzianLine>) {
          return spec.spectral_density * line.fwhm / kTwoPi;
        } else {
          return tabulated_integral_hz(line);
        }
      },
      spec.lineshape);
}

double center_density(const EnsembleSpec& spec) {
  return std::visit(
      [&](const auto& line) -> double {
        using T = std::decay_t<decltype(line)>;
        if constexpr (std::is_same_v<T, SquareLine>) {
          return spec.spectral_density / kTwoPi;
        } else if constexpr (std::is_same_v<T, LorentzianLine>) {
          return 2.0 * total_spins(spec) / (kPi * line.fwhm);
        } else {
          return table_density_at(line, 0.0) / kTwoPi;
        }
      },
      spec.lineshape);
}

double mean_g_squared(const CouplingDistribution& coupling) {
  if (const auto* g0 = std::get_if<double>(&coupling)) return *g0 * *g0;
  const auto& table = std::get<CouplingTable>(coupling);
  double sum = 0.0;
  for (std::size_t k = 0; k < table.g.size(); ++k) sum += table.weights[k] * table.g[k] * table.g[k];
  return sum;
}

double cooperativity_formula(double g0, double n_per_gamma, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  return 4.0 * g0 * g0 * n_per_gamma / kappa;
}

double cooperativity(const EnsembleSpec& spec, const CavityParams& cavity, double n_cav) {
  const double kappa = cavity.kappa(n_cav);
  if (!(kappa > 0.0)) throw std::invalid_argument("total kappa must be positive");
  return kTwoPi * mean_g_squared(spec.coupling) * center_density(spec) / kappa;
}

EnsembleSpec with_cooperativity(EnsembleSpec spec, const CavityParams& cavity, double target,
                                double n_cav) {
  if (!(target >= 0.0)) throw std::invalid_argument("target cooperativity must be non-negative");
  if (auto* table = std::get_if<TabulatedLine>(&spec.lineshape)) {
    const double current = cooperativity(spec, cavity, n_cav);
    if (!(current > 0.0)) throw std::invalid_argument("tabulated line has zero density at the cavity frequency");
    for (auto& d : table->density_per_hz) d *= target / current;
    return spec;
  }
  spec.spectral_density = 1.0;
  const double unit = cooperativity(spec, cavity, n_cav);
  if (!(unit > 0.0)) throw std::invalid_argument("coupling must be non-zero to reach a cooperativity");
  spec.spectral_density = target / unit;
  return spec;
}

std::vector<SpinPacket> discretize_ensemble(const EnsembleSpec& spec, const CavityParams& cavity,
                                            int n_packets, const DiscretizationOptions& options) {
  spec.validate();
  cavity.validate();
  if (n_packets < 16) throw std::invalid_argument("discretize_ensemble needs at least 16 packets");

  std::vector<double> g_values{0.0};
  std::vector<double> g_weights{1.0};
  if (const auto* g0 = std::get_if<double>(&spec.coupling)) {
    g_values[0] = *g0;
  } else {
    const auto& table = std::get<CouplingTable>(spec.coupling);
    g_values = table.g;
    g_weights = table.weights;
  }
  const int n_g = static_cast<int>(g_values.size());
  const int n_delta = std::max(1, n_packets / n_g);
  const double n_total = total_spins(spec);

  std::vector<double> detunings(n_delta);
  std::vector<double> weights(n_delta, n_total / n_delta);

  auto quantile = [&](double u) -> double {
    return std::visit(
        [&](const auto& line) -> double {
          using T = std::decay_t<decltype(line)>;
          if constexpr (std::is_same_v<T, SquareLine>) {
            return line.width * (u - 0.5);
          } else if constexpr (std::is_same_v<T, LorentzianLine>) {
            return 0.5 * line.fwhm * std::tan(kPi * (u - 0.5));
          } else {
            return TableQuantile(line)(u);
          }
        },
        spec.lineshape);
  };

  switch (options.placement) {
    case Placement::quantile:
      for (int k = 0; k < n_delta; ++k) detunings[k] = quantile((k + 0.5) / n_delta);
      break;
    case Placement::stratified: {
      std::mt19937_64 rng(options.seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (int k = 0; k < n_delta; ++k) detunings[k] = quantile((k + unit(rng)) / n_delta);
      break;
    }
    case Placement::uniform: {
      double lo = 0.0;
      double hi = 0.0;
      std::visit(
          [&](const auto& line) {
            using T = std::decay_t<decltype(line)>;
            if constexpr (std::is_same_v<T, SquareLine>) {
              lo = -0.5 * line.width;
              hi = 0.5 * line.width;
            } else if constexpr (std::is_same_v<T, LorentzianLine>) {
              lo = -options.lorentzian_cutoff * line.fwhm;
              hi = -lo;
            } else {
              lo = kTwoPi * line.detuning_hz.front();
              hi = kTwoPi * line.detuning_hz.back();
            }
          },
          spec.lineshape);
      const double cell = (hi - lo) / n_delta;
      for (int k = 0; k < n_delta; ++k) {
        const double delta = lo + (k + 0.5) * cell;
        detunings[k] = delta;
        double density = 0.0;  // spins per rad/s
        std::visit(
            [&](const auto& line) {
              using T = std::decay_t<decltype(line)>;
              if constexpr (std::is_same_v<T, SquareLine>) {
                density = spec.spectral_density / kTwoPi;
              } else if constexpr (std::is_same_v<T, LorentzianLine>) {
                const double hw = 0.5 * line.fwhm;
                density = n_total * hw / (kPi * (delta * delta + hw * hw));
              } else {
                density = table_density_at(line, delta / kTwoPi) / kTwoPi;
              }
            },
            spec.lineshape);
        weights[k] = density * cell;
      }
      break;
    }
  }

  const double kappa = cavity.kappa(0.0);
  std::vector<SpinPacket> packets;
  packets.reserve(static_cast<std::size_t>(n_delta) * n_g);
  for (int k = 0; k < n_delta; ++k) {
    if (!(weights[k] > 0.0)) continue;
    for (int j = 0; j < n_g; ++j) {
      SpinPacket p;
      p.delta = detunings[k];
      p.g = g_values[j];
      p.weight = weights[k] * g_weights[j];
      p.s_plus = {0.0, 0.0};
      p.s_z = spec.sz_equilibrium;
      p.t1 = purcell_time(p.g, p.delta, kappa);
      p.t2 = spec.t2;
      packets.push_back(p);
    }
  }
  return packets;
}

double packet_cooperativity(const std::vector<SpinPacket>& packets, double kappa,
                            double probe_halfwidth) {
  if (!(kappa > 0.0) || !(probe_halfwidth > 0.0)) {
    throw std::invalid_argument("packet_cooperativity needs positive kappa and probe width");
  }
  double sum = 0.0;
  for (const auto& p : packets) {
    sum += p.weight * p.g * p.g * probe_halfwidth /
           (p.delta * p.delta + probe_halfwidth * probe_halfwidth);
  }
  return 2.0 * sum / kappa;
}

}  // namespace spinmem
