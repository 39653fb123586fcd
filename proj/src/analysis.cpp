#include "spinmem/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace spinmem {

namespace {

using cd = std::complex<double>;

template <class F>
double trapezoid_in_window(const Trace& trace, double t_begin, double t_end, F f) {
  double sum = 0.0;
  bool have_prev = false;
  double t_prev = 0.0;
  double f_prev = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const double t = trace.times[k];
    if (t < t_begin || t > t_end) continue;
    const double v = f(k);
    if (have_prev) sum += 0.5 * (v + f_prev) * (t - t_prev);
    t_prev = t;
    f_prev = v;
    have_prev = true;
  }
  return sum;
}

}  // namespace

ModeFilter ModeFilter::gaussian(double center, double t0, double truncation) {
  ModeFilter f{center, t0, truncation};
  f.validate();
  return f;
}

void ModeFilter::validate() const {
  if (!(t0 > 0.0) || !std::isfinite(center) || !(truncation >= 3.0)) {
    throw std::invalid_argument("mode filter needs t0 > 0 and truncation >= 3");
  }
}

double ModeFilter::operator()(double t) const {
  if (t < support_begin() || t > support_end()) return 0.0;
  const double x = (t - center) / t0;
  return std::pow(2.0 / (std::numbers::pi * t0 * t0), 0.25) * std::exp(-x * x);
}

std::complex<double> mode_match(std::span<const double> times, std::span<const cd> signal,
                                const ModeFilter& filter) {
  filter.validate();
  if (times.size() != signal.size()) throw std::invalid_argument("times and signal sizes differ");
  if (times.size() < 2 || times.front() > filter.support_begin() ||
      times.back() < filter.support_end()) {
    throw std::invalid_argument("mode filter support is not covered by the trace");
  }
  // Samples inside the support plus one on each side.
  std::size_t lo = 0;
  while (lo + 1 < times.size() && times[lo + 1] <= filter.support_begin()) ++lo;
  std::size_t hi = lo;
  while (hi + 1 < times.size() && times[hi] < filter.support_end()) ++hi;

  double max_gap = 0.0;
  double typical = (times[hi] - times[lo]) / static_cast<double>(std::max<std::size_t>(1, hi - lo));
  cd sum{0.0, 0.0};
  for (std::size_t k = lo; k < hi; ++k) {
    const double dt = times[k + 1] - times[k];
    max_gap = std::max(max_gap, dt);
    sum += 0.5 * dt * (filter(times[k]) * signal[k] + filter(times[k + 1]) * signal[k + 1]);
  }
  if (max_gap > 1.0e-3 * (filter.support_end() - filter.support_begin()) &&
      max_gap > 1.5 * typical) {
    throw std::invalid_argument("mode filter support spans a gap in the trace sampling");
  }
  return sum;
}

std::complex<double> mode_match(const Trace& trace, const ModeFilter& filter) {
  return mode_match(trace.times, trace.a_out, filter);
}

double cooperativity_from_ratio(const Trace& polarized, const Trace& saturated, double t_begin,
                                double t_end) {
  if (!(t_end > t_begin)) throw std::invalid_argument("ratio window must have t_end > t_begin");
  auto mean_abs = [&](const Trace& tr) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (tr.times[k] >= t_begin && tr.times[k] <= t_end) {
        acc += std::abs(tr.alpha[k]);
        ++n;
      }
    }
    if (n == 0) throw std::invalid_argument("ratio window contains no samples");
    return acc / static_cast<double>(n);
  };
  const double p = mean_abs(polarized);
  const double s = mean_abs(saturated);
  if (!(p > 0.0) || !(s > 1e-300)) {
    throw std::invalid_argument("cavity field vanishes in the ratio window");
  }
  return s / p - 1.0;
}

RetrievalEfficiency retrieval_efficiency(double cooperativity, double kappa_c, double kappa) {
  if (!(cooperativity >= 0.0) || !(kappa > 0.0) || !(kappa_c >= 0.0)) {
    throw std::invalid_argument("retrieval efficiency needs C >= 0, kappa > 0, kappa_c >= 0");
  }
  RetrievalEfficiency r;
  r.zeta = 4.0 * cooperativity * kappa_c / kappa;
  r.energy_efficiency = r.zeta * r.zeta;
  r.outside_weak_coupling = cooperativity > 0.2;
  return r;
}

double spontaneous_emission_photons(double cooperativity) {
  if (!(cooperativity >= 0.0)) throw std::invalid_argument("cooperativity must be >= 0");
  return cooperativity;
}

void AmplifierModel::validate() const {
  if (!(gain > 1.0) || !std::isfinite(gain)) throw std::invalid_argument("amplifier gain must exceed 1");
  if (!(n_id >= 0.0)) throw std::invalid_argument("idler occupation must be >= 0");
}

NoiseSigmas noise_statistics(const AmplifierModel& model, double echo_thermal_c) {
  model.validate();
  if (!(echo_thermal_c >= 0.0)) throw std::invalid_argument("thermal echo photons must be >= 0");
  const double g = model.gain;
  const double idler = (1.0 + 2.0 * model.n_id) / 4.0;
  auto referred = [&](double input_var) { return (g * input_var + (g - 1.0) * idler) / g; };
  return {std::sqrt(referred(0.25)), std::sqrt(referred((1.0 + 2.0 * echo_thermal_c) / 4.0))};
}

double n_id_from_sigma(double sigma_o) {
  if (!(sigma_o > 0.0)) throw std::invalid_argument("sigma must be positive");
  return 2.0 * sigma_o * sigma_o - 1.0;
}

HistogramSamples simulate_histograms(const AmplifierModel& model, double signal_amplitude,
                                     int n_shots, double echo_thermal_c) {
  model.validate();
  if (n_shots < 100) throw std::invalid_argument("histogram simulation needs at least 100 shots");
  if (!(echo_thermal_c >= 0.0)) throw std::invalid_argument("thermal echo photons must be >= 0");
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double g = model.gain;
  const double sd_idler = std::sqrt((1.0 + 2.0 * model.n_id) / 4.0);
  const double sd_vacuum = 0.5;
  const double sd_echo = std::sqrt((1.0 + 2.0 * echo_thermal_c) / 4.0);
  // X_b = sqrt(G) X_a + sqrt(G - 1) X_id, referred back by 1/sqrt(G).
  auto shot = [&](double mean, double sd_input) {
    const double xa = mean + sd_input * normal(rng);
    const double xid = sd_idler * normal(rng);
    return (std::sqrt(g) * xa + std::sqrt(g - 1.0) * xid) / std::sqrt(g);
  };
  HistogramSamples out;
  out.echo.reserve(n_shots);
  out.off.reserve(n_shots);
  for (int k = 0; k < n_shots; ++k) {
    out.off.push_back(shot(0.0, sd_vacuum));
    out.echo.push_back(shot(signal_amplitude, sd_echo));
  }
  return out;
}

EchoMoments echo_moments(const HistogramSamples& samples) {
  auto stats = [](const std::vector<double>& v) {
    if (v.size() < 2) throw std::invalid_argument("need at least two samples");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    return std::pair{mean, std::sqrt(var)};
  };
  const auto [me, se] = stats(samples.echo);
  const auto [mo, so] = stats(samples.off);
  return {me, mo, se, so};
}

void write_histogram_csv(std::ostream& out, const HistogramSamples& samples) {
  out << "sample_index,window,value\n";
  char buf[64];
  auto emit = [&](const std::vector<double>& v, char window) {
    for (std::size_t k = 0; k < v.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", v[k]);
      out << k << ',' << window << ',' << buf << '\n';
    }
  };
  emit(samples.echo, 'E');
  emit(samples.off, 'O');
}

double loaded_linewidth(double kappa, double g_ens, double gamma_fwhm, double delta_s) {
  if (!(kappa > 0.0) || !(gamma_fwhm > 0.0) || !(g_ens >= 0.0)) {
    throw std::invalid_argument("need kappa > 0, Gamma > 0 and g_ens >= 0");
  }
  const double half = 0.5 * gamma_fwhm;
  return kappa + g_ens * g_ens * half / (delta_s * delta_s + half * half);
}

std::vector<QPoint> q_factor_sweep(const CavityParams& cavity, const QSweepLine& line,
                                   std::span<const double> fields) {
  cavity.validate();
  if (!line.spin_frequency) throw std::invalid_argument("q sweep needs a spin frequency model");
  const double kappa = cavity.kappa(0.0);
  std::vector<QPoint> out;
  out.reserve(fields.size());
  for (const double b : fields) {
    QPoint p;
    p.field = b;
    p.delta_s = line.spin_frequency(b) - cavity.omega0;
    p.linewidth = loaded_linewidth(kappa, line.g_ens, line.gamma_fwhm, p.delta_s);
    p.q = cavity.omega0 / p.linewidth;
    out.push_back(p);
  }
  return out;
}

double q_dip_fraction(double kappa, double g_ens, double gamma_fwhm) {
  return 1.0 - kappa / loaded_linewidth(kappa, g_ens, gamma_fwhm, 0.0);
}

ExponentialFit fit_exponential_decay(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("exponential fit needs at least two (x, y) pairs");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(y[k] > 0.0)) throw std::invalid_argument("exponential fit needs positive data");
    const double ly = std::log(y[k]);
    sx += x[k];
    sy += ly;
    sxx += x[k] * x[k];
    sxy += x[k] * ly;
  }
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) throw std::invalid_argument("exponential fit needs distinct x values");
  const double slope = (n * sxy - sx * sy) / den;
  const double icpt = (sy - slope * sx) / n;
  return {std::exp(icpt), -slope};
}

double output_energy(const Trace& trace, double t_begin, double t_end) {
  return trapezoid_in_window(trace, t_begin, t_end,
                             [&](std::size_t k) { return std::norm(trace.a_out[k]); });
}

double input_energy(const Trace& trace) {
  if (trace.size() == 0) return 0.0;
  return trapezoid_in_window(trace, trace.times.front(), trace.times.back(),
                             [&](std::size_t k) { return std::norm(trace.beta_in[k]); });
}

double echo_centroid(const Trace& trace, double t_begin, double t_end) {
  const double e = output_energy(trace, t_begin, t_end);
  if (!(e > 0.0)) throw std::invalid_argument("no output energy in the centroid window");
  const double m = trapezoid_in_window(trace, t_begin, t_end, [&](std::size_t k) {
    return trace.times[k] * std::norm(trace.a_out[k]);
  });
  return m / e;
}

std::vector<EchoReport> analyze_echo_train(const Trace& trace, std::span<const double> input_centers,
                                           double refocus_center, double t0, double slot_width) {
  if (!(slot_width > 0.0) || !(t0 > 0.0)) throw std::invalid_argument("need t0 > 0 and slot width > 0");
  const double truncation = std::clamp(0.5 * slot_width / t0, 3.0, 5.0);
  std::vector<EchoReport> out;
  out.reserve(input_centers.size());
  for (std::size_t k = 0; k < input_centers.size(); ++k) {
    EchoReport r;
    r.input_index = static_cast<int>(k);
    r.input_center = input_centers[k];
    r.expected_time = 2.0 * refocus_center - input_centers[k];
    r.centroid = echo_centroid(trace, r.expected_time - 0.5 * slot_width,
                               r.expected_time + 0.5 * slot_width);
    r.amplitude = mode_match(trace, ModeFilter::gaussian(r.expected_time, t0, truncation));
    r.photons = std::norm(r.amplitude);
    r.energy = output_energy(trace, r.expected_time - 0.5 * slot_width,
                             r.expected_time + 0.5 * slot_width);
    out.push_back(r);
  }
  return out;
}

MemoryRunResult run_memory_experiment(const EnsembleSpec& ensemble, const CavityParams& cavity,
                                      const std::vector<SpinPacket>& packets,
                                      const MemoryRunOptions& options,
                                      const IntegratorOptions& integrator) {
  std::vector<double> phases = options.phases;
  if (phases.empty()) {
    for (int k = 0; k < options.pulses; ++k) {
      phases.push_back(std::fmod(2.4 * k, 2.0 * std::numbers::pi));
    }
  }
  MemoryTrainOptions train;
  train.t0 = options.t0;
  train.truncation = options.truncation;
  MemoryRunResult r;
  r.program = memory_train_program(options.pulses, options.spacing, phases, options.n_in,
                                   options.tau, train);

  std::vector<double> centers;
  double refocus_center = 0.0;
  for (const auto& seg : r.program.segments) {
    if (seg.emits()) centers.push_back(seg.center());
    if (std::holds_alternative<IdealRotation>(seg.kind)) refocus_center = seg.center();
  }
  r.trace = evolve(r.program, packets, cavity, integrator).trace;
  r.echoes = analyze_echo_train(r.trace, centers, refocus_center, options.t0, options.spacing);

  r.cooperativity = cooperativity(ensemble, cavity);
  r.zeta = retrieval_efficiency(r.cooperativity, cavity.kappa_c, cavity.kappa()).zeta;
  r.expected_photons = r.zeta * r.zeta * options.n_in;
  r.decay_factor = std::isinf(ensemble.t2) ? 1.0 : std::exp(-4.0 * options.tau / ensemble.t2);
  double energy = 0.0;
  double mode = 0.0;
  for (const auto& e : r.echoes) {
    energy += e.energy;
    mode += e.photons;
  }
  const double count = std::max<double>(1.0, static_cast<double>(r.echoes.size()));
  r.mean_photons = energy / count;
  r.mean_mode_photons = mode / count;
  r.mean_photons_corrected = r.mean_photons / r.decay_factor;
  return r;
}

void write_summary(std::ostream& out, const std::vector<std::pair<std::string, double>>& entries) {
  char buf[64];
  for (const auto& [key, value] : entries) {
    std::snprintf(buf, sizeof buf, "%.10g", value);
    out << key << '=' << buf << '\n';
  }
}

}  // namespace spinmem
