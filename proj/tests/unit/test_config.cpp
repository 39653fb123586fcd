#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "spinmem/config.hpp"

using namespace spinmem;

TEST_CASE("SI values") {
  CHECK(parse_si_value("20m", "T") == doctest::Approx(0.02));
  CHECK(parse_si_value("20 mT", "T") == doctest::Approx(0.02));
  CHECK(parse_si_value("7.338 GHz", "Hz") == doctest::Approx(7.338e9));
  CHECK(parse_si_value("1M", "Hz") == 1e6);
  CHECK(parse_si_value("10u", "s") == doctest::Approx(1e-5));
  CHECK(parse_si_value("10µs", "s") == doctest::Approx(1e-5));
  CHECK(parse_si_value("500 ps", "s") == doctest::Approx(5e-10));
  CHECK(parse_si_value("4e5 /s", "/s") == 4e5);
  CHECK(parse_si_value("-3", "") == -3.0);
  CHECK_THROWS_AS(parse_si_value("abc", "s"), ConfigError);
  CHECK_THROWS_AS(parse_si_value("10 x", "s"), ConfigError);
  CHECK_THROWS_AS(parse_si_value("10 Hz", "T"), ConfigError);
}

TEST_CASE("defaults describe the clock-transition memory") {
  const auto c = ExperimentConfig::defaults();
  CHECK(c.cavity.kappa() == 1.3e6);
  CHECK(cooperativity(c.resolved_ensemble(), c.cavity) == doctest::Approx(0.035));
  CHECK(c.packets == 4096);
  CHECK(c.amplifier.n_id == 3.5);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text with every section") {
  const auto c = parse_config(R"(
# comment
[spin]
gamma_e = 28 GHz/T
hyperfine = 1.475 GHz
[cavity]
omega0 = 7.3 GHz
kappa_c = 5e5 /s
kappa_i = 8e5
[ensemble]
lineshape = lorentzian
width = 2 MHz
g0 = 50 Hz
density = 0.5
t2 = inf
packets = 1024
placement = stratified
seed = 9
[integrator]
tolerance = 1e-9
skip_delays = no
[amplifier]
n_id = 2
shots = 500
[output]
directory = results
)");
  CHECK(c.cavity.omega0 == doctest::Approx(2 * std::numbers::pi * 7.3e9));
  CHECK(c.cavity.kappa() == 1.3e6);
  CHECK(std::get<LorentzianLine>(c.ensemble.lineshape).fwhm == doctest::Approx(2 * std::numbers::pi * 2e6));
  CHECK(std::get<double>(c.ensemble.coupling) == doctest::Approx(2 * std::numbers::pi * 50));
  CHECK_FALSE(c.target_cooperativity.has_value());
  CHECK(std::isinf(c.ensemble.t2));
  CHECK(c.packets == 1024);
  CHECK(c.discretization.placement == Placement::stratified);
  CHECK(c.discretization.seed == 9);
  CHECK(c.integrator.tolerance == 1e-9);
  CHECK_FALSE(c.integrator.skip_delays);
  CHECK(c.amplifier.n_id == 2.0);
  CHECK(c.shots == 500);
  CHECK(c.output_dir == "results");
}

TEST_CASE("cooperativity target and TLS losses") {
  const auto c = parse_config("[cavity]\ntls_kappa0 = 1e6\ntls_kappa_res = 5e5\n[ensemble]\ncooperativity = 0.1\n");
  CHECK(c.cavity.power_dependent());
  CHECK(cooperativity(c.resolved_ensemble(), c.cavity) == doctest::Approx(0.1));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("[cavity]\nfoo = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cavity\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cavity]\nkappa_c\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ensemble]\ndensity = 1\ncooperativity = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ensemble]\nlineshape = lorentzian\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ensemble]\ntable = missing.csv\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ensemble]\npackets = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cavity]\nkappa_c = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cavity]\nkappa_i = 1\ntls_kappa0 = 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
  try {
    parse_config("\n\n[ensemble]\nplacement = random\n");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("relative paths resolve against the config directory") {
  const auto dir = std::filesystem::temp_directory_path() / "spinmem_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "line.csv") << "detuning_Hz,density\n-5e6,1\n5e6,1\n";
    std::ofstream(dir / "hahn.seq") << "pulse ideal angle=pi/2\nacquire 10u\n";
    std::ofstream(dir / "run.cfg") << "[ensemble]\nlineshape = table\ntable = line.csv\n[sequence]\nfile = hahn.seq\n";
  }
  const auto c = load_config((dir / "run.cfg").string());
  CHECK(std::holds_alternative<TabulatedLine>(c.ensemble.lineshape));
  CHECK(c.sequence_file == (dir / "hahn.seq").string());
  CHECK_FALSE(c.source_text.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}
