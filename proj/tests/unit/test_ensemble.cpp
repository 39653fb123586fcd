#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "spinmem/ensemble.hpp"

using namespace spinmem;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

CavityParams cavity_13() {
  CavityParams c;
  c.omega0 = kTau * 7.338e9;
  c.kappa_c = 4.0e5;
  c.kappa_i_fixed = 9.0e5;
  return c;
}

double lorentz_cdf(double delta, double fwhm) {
  return 0.5 + std::atan(2.0 * delta / fwhm) / std::numbers::pi;
}

}  // namespace

TEST_CASE("Purcell time") {
  const double g = kTau * 40.0;
  const double t1 = purcell_time(g, 0.0, 1.3e6);
  CHECK(t1 == doctest::Approx(1.3e6 / (4.0 * g * g)).epsilon(1e-14));
  CHECK(t1 == doctest::Approx(5.1448).epsilon(1e-4));
  CHECK(purcell_time(g, 1.3e6, 1.3e6) == doctest::Approx(5.0 * t1).epsilon(1e-14));
  CHECK(std::isinf(purcell_time(0.0, 0.0, 1.3e6)));
  CHECK_THROWS_AS(purcell_time(g, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("TLS loss law and anchors") {
  const TlsParams tls = TlsParams::from_anchors(1.0, 2.0e6, 1.0e6, 5.0e5, 1.0e3);
  CHECK(tls_loss(tls, 1.0) == doctest::Approx(2.0e6).epsilon(1e-12));
  CHECK(tls_loss(tls, 1.0e6) == doctest::Approx(5.0e5).epsilon(1e-12));
  CHECK(tls_loss(tls, 10.0) < tls_loss(tls, 1.0));
  CavityParams c;
  c.kappa_c = 1e5;
  c.tls = tls;
  CHECK(c.power_dependent());
  CHECK(c.kappa(1.0) == doctest::Approx(2.1e6));
  c.kappa_i_fixed = 9e5;
  CHECK_FALSE(c.power_dependent());
  CHECK(c.kappa(1e9) == doctest::Approx(1.0e6));
}

TEST_CASE("cooperativity formula for 40 Hz, one spin per Hz, kappa 1.3e6") {
  const double c = cooperativity_formula(kTau * 40.0, 1.0 / kTau, 1.3e6);
  CHECK(c == doctest::Approx(4.0 * kTau * 1600.0 / 1.3e6).epsilon(1e-14));
  CHECK(c == doctest::Approx(0.0309).epsilon(2e-3));
}

TEST_CASE("dynamic cooperativity of Lorentzian and square lines") {
  const CavityParams cav = cavity_13();
  EnsembleSpec lor;
  lor.lineshape = LorentzianLine{kTau * 1e6};
  lor.coupling = kTau * 40.0;
  lor.spectral_density = 1.0;
  const double formula = cooperativity_formula(kTau * 40.0, 1.0 / kTau, cav.kappa());
  CHECK(cooperativity(lor, cav) == doctest::Approx(formula).epsilon(1e-12));

  EnsembleSpec sq = lor;
  sq.lineshape = SquareLine{kTau * 1e6};
  CHECK(cooperativity(sq, cav) == doctest::Approx(0.5 * std::numbers::pi * formula).epsilon(1e-12));
}

TEST_CASE("with_cooperativity hits its target") {
  const CavityParams cav = cavity_13();
  EnsembleSpec sq;
  sq.lineshape = SquareLine{10.0 * cav.kappa()};
  sq.coupling = kTau * 40.0;
  sq.spectral_density = 1.0;
  const EnsembleSpec s = with_cooperativity(sq, cav, 0.035);
  CHECK(cooperativity(s, cav) == doctest::Approx(0.035).epsilon(1e-13));
  CHECK_THROWS_AS(with_cooperativity(sq, cav, -1.0), std::invalid_argument);
}

TEST_CASE("quantile packets carry the total spin number and Purcell T1") {
  const CavityParams cav = cavity_13();
  EnsembleSpec sq;
  sq.lineshape = SquareLine{10.0 * cav.kappa()};
  sq.coupling = kTau * 40.0;
  sq.spectral_density = 2.0;
  sq.t2 = 0.3;
  const auto packets = discretize_ensemble(sq, cav, 1024);
  REQUIRE(packets.size() == 1024);
  double n = 0.0;
  for (const auto& p : packets) {
    n += p.weight;
    CHECK(p.t1 == doctest::Approx(purcell_time(p.g, p.delta, cav.kappa())));
    CHECK(p.t2 == 0.3);
    CHECK(p.s_z == 1.0);
  }
  CHECK(n == doctest::Approx(total_spins(sq)).epsilon(1e-12));
  CHECK(packets.front().delta == doctest::Approx(-5.0 * cav.kappa() * (1.0 - 1.0 / 1024)));
}

TEST_CASE("packet cooperativity converges to the continuum value") {
  const CavityParams cav = cavity_13();
  EnsembleSpec sq;
  sq.lineshape = SquareLine{10.0 * cav.kappa()};
  sq.coupling = kTau * 40.0;
  sq = with_cooperativity(sq, cav, 0.035);
  const auto packets = discretize_ensemble(sq, cav, 4096);
  // A narrow probe sees the line-centre density: C_packets -> C.
  CHECK(packet_cooperativity(packets, cav.kappa(), 0.05 * cav.kappa()) ==
        doctest::Approx(0.035 * (2.0 / std::numbers::pi) * std::atan(5.0 / 0.05)).epsilon(2e-3));
}

TEST_CASE("stratified Lorentzian placement passes Kolmogorov-Smirnov") {
  CavityParams cav = cavity_13();
  EnsembleSpec lor;
  const double fwhm = kTau * 1e6;
  lor.lineshape = LorentzianLine{fwhm};
  lor.coupling = kTau * 76.0;
  lor.spectral_density = 1.0;
  DiscretizationOptions a;
  a.placement = Placement::stratified;
  a.seed = 1;
  DiscretizationOptions b = a;
  b.seed = 2;
  const int n = 2000;
  auto da = discretize_ensemble(lor, cav, n, a);
  auto db = discretize_ensemble(lor, cav, n, b);
  std::vector<double> xa, xb;
  for (auto& p : da) xa.push_back(p.delta);
  for (auto& p : db) xb.push_back(p.delta);
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());

  // One sample against the analytic CDF.
  double d1 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double f = lorentz_cdf(xa[k], fwhm);
    d1 = std::max({d1, std::abs(f - double(k) / n), std::abs(f - double(k + 1) / n)});
  }
  CHECK(d1 < 1.36 / std::sqrt(n));

  // Two samples against each other.
  double d2 = 0.0;
  std::size_t i = 0, j = 0;
  while (i < xa.size() && j < xb.size()) {
    if (xa[i] <= xb[j]) ++i; else ++j;
    d2 = std::max(d2, std::abs(double(i) / n - double(j) / n));
  }
  CHECK(d2 < 1.36 * std::sqrt(2.0 / n));

  CHECK(xa != xb);
  auto again = discretize_ensemble(lor, cav, n, a);
  CHECK(again.front().delta == da.front().delta);
  CHECK(again.back().delta == da.back().delta);
}

TEST_CASE("uniform placement weights follow the density") {
  CavityParams cav = cavity_13();
  EnsembleSpec lor;
  lor.lineshape = LorentzianLine{kTau * 1e6};
  lor.coupling = kTau * 76.0;
  lor.spectral_density = 1.0;
  DiscretizationOptions o;
  o.placement = Placement::uniform;
  const auto packets = discretize_ensemble(lor, cav, 40001, o);
  double n = 0.0;
  for (auto& p : packets) n += p.weight;
  // Truncation at +-200 FWHM keeps all but 2/(pi*400) of the spins.
  CHECK(n / total_spins(lor) == doctest::Approx(1.0 - 1.0 / (200.0 * std::numbers::pi)).epsilon(1e-4));
}

TEST_CASE("tabulated line and coupling tables") {
  std::istringstream line("detuning_Hz,density\n-1e6,1\n0,1\n1e6,1\n");
  const TabulatedLine t = TabulatedLine::read_csv(line);
  CHECK(t.detuning_hz.size() == 3);
  std::istringstream gt("g_Hz,weight\n30,1\n50,3\n");
  const CouplingTable c = CouplingTable::read_csv(gt);
  CHECK(c.weights[1] == doctest::Approx(0.75));
  CHECK(mean_g_squared(c) == doctest::Approx(kTau * kTau * (0.25 * 900 + 0.75 * 2500)));

  EnsembleSpec spec;
  spec.lineshape = t;
  spec.coupling = c;
  CHECK(total_spins(spec) == doctest::Approx(2e6));
  CHECK(center_density(spec) == doctest::Approx(1.0 / kTau));
  const auto packets = discretize_ensemble(spec, cavity_13(), 64);
  CHECK(packets.size() == 64);

  std::istringstream bad("x,y\n1,2\nnot,number\n");
  CHECK_THROWS(TabulatedLine::read_csv(bad));
}

TEST_CASE("Bloch-ball predicate") {
  SpinPacket p;
  p.s_z = 0.0;
  p.s_plus = {0.5, 0.0};
  CHECK(p.in_bloch_ball());
  p.s_plus = {0.51, 0.0};
  CHECK_FALSE(p.in_bloch_ball());
}
