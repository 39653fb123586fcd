#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "spinmem/analysis.hpp"

using namespace spinmem;
using cd = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;

Trace gaussian_trace(double center, double t0, double photons, double phase, double t_end,
                     double dt) {
  Trace tr;
  tr.sample_interval = dt;
  const ModeFilter u = ModeFilter::gaussian(center, t0);
  for (int k = 0; k * dt <= t_end + 1e-15; ++k) {
    const double t = k * dt;
    tr.times.push_back(t);
    tr.a_out.push_back(std::sqrt(photons) * u(t) * std::polar(1.0, phase));
    tr.alpha.push_back(0.0);
    tr.beta_in.push_back(0.0);
    tr.segment_id.push_back(0);
  }
  return tr;
}

}  // namespace

TEST_CASE("mode filter is normalized") {
  const ModeFilter u = ModeFilter::gaussian(0.0, 10e-6);
  double s = 0.0;
  const double dt = 1e-8;
  for (double t = -50e-6; t <= 50e-6; t += dt) s += u(t) * u(t) * dt;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(u(60e-6) == 0.0);
  CHECK_THROWS_AS(ModeFilter::gaussian(0.0, 10e-6, 2.0).validate(), std::invalid_argument);
}

TEST_CASE("mode matching recovers amplitude and phase") {
  const Trace tr = gaussian_trace(100e-6, 10e-6, 0.45, 0.7, 200e-6, 1e-7);
  const cd a = mode_match(tr, ModeFilter::gaussian(100e-6, 10e-6));
  CHECK(std::norm(a) == doctest::Approx(0.45).epsilon(1e-6));
  CHECK(std::arg(a) == doctest::Approx(0.7).epsilon(1e-9));
  // Mismatched centre loses overlap exp(-(dt/t0)^2 / 2).
  const cd b = mode_match(tr, ModeFilter::gaussian(110e-6, 10e-6));
  CHECK(std::norm(b) == doctest::Approx(0.45 * std::exp(-1.0)).epsilon(1e-5));
  CHECK_THROWS_AS(mode_match(tr, ModeFilter::gaussian(180e-6, 10e-6)), std::invalid_argument);
  CHECK(output_energy(tr, 0.0, 200e-6) == doctest::Approx(0.45).epsilon(1e-6));
  CHECK(echo_centroid(tr, 50e-6, 150e-6) == doctest::Approx(100e-6).epsilon(1e-9));
}

TEST_CASE("echo train analysis on a synthetic reversed train") {
  // Two inputs at 20 and 80 us, refocusing at 500 us: echoes at 980 and 920 us.
  Trace tr = gaussian_trace(980e-6, 10e-6, 0.3, 0.2, 1100e-6, 1e-7);
  const Trace second = gaussian_trace(920e-6, 10e-6, 0.2, -1.0, 1100e-6, 1e-7);
  for (std::size_t k = 0; k < tr.size(); ++k) tr.a_out[k] += second.a_out[k];
  const std::vector<double> centers{20e-6, 80e-6};
  const auto echoes = analyze_echo_train(tr, centers, 500e-6, 10e-6, 60e-6);
  REQUIRE(echoes.size() == 2);
  CHECK(echoes[0].expected_time == doctest::Approx(980e-6));
  CHECK(echoes[0].photons == doctest::Approx(0.3).epsilon(1e-3));
  CHECK(echoes[1].photons == doctest::Approx(0.2).epsilon(1e-3));
  CHECK(std::arg(echoes[1].amplitude) - std::arg(echoes[0].amplitude) == doctest::Approx(-1.2).epsilon(1e-3));
  CHECK(echoes[1].centroid == doctest::Approx(920e-6).epsilon(1e-4));
}

TEST_CASE("cooperativity from the field ratio") {
  Trace p, s;
  for (int k = 0; k < 100; ++k) {
    p.times.push_back(k * 1e-6);
    s.times.push_back(k * 1e-6);
    p.alpha.push_back(cd(1.0, 0.0));
    s.alpha.push_back(cd(0.0, 1.035));
  }
  CHECK(cooperativity_from_ratio(p, s, 10e-6, 90e-6) == doctest::Approx(0.035).epsilon(1e-12));
  CHECK_THROWS_AS(cooperativity_from_ratio(p, s, 200e-6, 300e-6), std::invalid_argument);
}

TEST_CASE("retrieval efficiency") {
  const auto r = retrieval_efficiency(0.035, 4e5, 1.3e6);
  CHECK(r.zeta == doctest::Approx(4 * 0.035 * 4e5 / 1.3e6));
  CHECK(r.energy_efficiency * 240.0 == doctest::Approx(0.4454).epsilon(1e-3));
  CHECK_FALSE(r.outside_weak_coupling);
  CHECK(retrieval_efficiency(0.3, 4e5, 1.3e6).outside_weak_coupling);
  CHECK(spontaneous_emission_photons(0.035) == 0.035);
}

TEST_CASE("amplifier noise") {
  AmplifierModel m;
  m.n_id = 3.5;
  const NoiseSigmas s = noise_statistics(m, 0.035);
  // Oracle: with G -> infinity, sigma_O^2 = 1/4 + (1 + 2 n_id)/4.
  CHECK(s.sigma_o == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(s.sigma_e / s.sigma_o - 1.0 < 0.005);
  CHECK(s.sigma_e > s.sigma_o);
  CHECK(n_id_from_sigma(1.5) == doctest::Approx(3.5));
  // Ideal phase-preserving amplifier at G = 2 with n_id = 0 adds half a quantum.
  AmplifierModel ideal;
  ideal.gain = 2.0;
  CHECK(noise_statistics(ideal, 0.0).sigma_o == doctest::Approx(std::sqrt(0.25 + 0.125)));
  ideal.gain = 1.0;
  CHECK_THROWS_AS(noise_statistics(ideal, 0.0), std::invalid_argument);
}

TEST_CASE("Monte Carlo histograms reproduce the analytic moments") {
  AmplifierModel m;
  m.n_id = 3.5;
  m.seed = 11;
  const int n = 20000;
  const HistogramSamples h = simulate_histograms(m, 0.6, n, 0.035);
  const EchoMoments mo = echo_moments(h);
  const NoiseSigmas s = noise_statistics(m, 0.035);
  const double se_mean = s.sigma_o / std::sqrt(n);
  const double se_sigma = s.sigma_o / std::sqrt(2.0 * n);
  CHECK(std::abs(mo.mean_o) < 3 * se_mean);
  CHECK(std::abs(mo.mean_e - 0.6) < 3 * se_mean);
  CHECK(std::abs(mo.sigma_o - s.sigma_o) < 3 * se_sigma);
  CHECK(std::abs(mo.sigma_e - s.sigma_e) < 3 * se_sigma);
  const HistogramSamples again = simulate_histograms(m, 0.6, n, 0.035);
  CHECK(again.echo == h.echo);
  CHECK_THROWS_AS(simulate_histograms(m, 0.6, 50), std::invalid_argument);

  std::ostringstream os;
  write_histogram_csv(os, simulate_histograms(m, 0.0, 100));
  const std::string csv = os.str();
  CHECK(csv.starts_with("sample_index,window,value\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 201);
}

TEST_CASE("resonance dip of the loaded linewidth") {
  const double kappa = 9e5;
  const double g_ens = 2 * kPi * 76.0 * std::sqrt(1e6);
  const double gamma = 2 * kPi * 1e6;
  const double c = 4 * g_ens * g_ens / (kappa * gamma);
  CHECK(loaded_linewidth(kappa, g_ens, gamma, 0.0) - kappa == doctest::Approx(kappa * c / 2).epsilon(1e-14));
  CHECK(q_dip_fraction(kappa, g_ens, gamma) == doctest::Approx((c / 2) / (1 + c / 2)).epsilon(1e-14));
  CHECK(loaded_linewidth(kappa, g_ens, gamma, 1e12) == doctest::Approx(kappa).epsilon(1e-9));

  CavityParams cav;
  cav.omega0 = 2 * kPi * 5e9;
  cav.kappa_c = kappa;
  cav.kappa_i_fixed = 0.0;
  QSweepLine line{g_ens, gamma, [&](double b) { return cav.omega0 + 2 * kPi * 28e9 * (b - 1e-3); }};
  const std::vector<double> fields{0.9e-3, 1e-3, 1.1e-3};
  const auto q = q_factor_sweep(cav, line, fields);
  REQUIRE(q.size() == 3);
  CHECK(q[1].delta_s == doctest::Approx(0.0).scale(1.0));
  CHECK(q[1].q < q[0].q);
  CHECK(q[0].q == doctest::Approx(q[2].q).epsilon(1e-9));
  CHECK(1.0 - q[1].q / (cav.omega0 / kappa) == doctest::Approx(q_dip_fraction(kappa, g_ens, gamma)));
}

TEST_CASE("exponential fit") {
  std::vector<double> x, y;
  for (int k = 0; k < 10; ++k) {
    x.push_back(0.03 * (k + 1));
    y.push_back(2.5 * std::exp(-x.back() / 0.15));
  }
  const auto f = fit_exponential_decay(x, y);
  CHECK(f.amplitude == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(f.time_constant() == doctest::Approx(0.15).epsilon(1e-12));
  y[3] = -1.0;
  CHECK_THROWS_AS(fit_exponential_decay(x, y), std::invalid_argument);
}

TEST_CASE("summary format") {
  std::ostringstream os;
  write_summary(os, {{"zeta", 0.04307692307692}, {"pulses", 20.0}});
  CHECK(os.str() == "zeta=0.04307692308\npulses=20\n");
}
