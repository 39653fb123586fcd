#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "spinmem/sequence.hpp"

using namespace spinmem;

namespace {

bool same_kind(const SegmentKind& a, const SegmentKind& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b);
        if constexpr (std::is_same_v<T, GaussianPulse>) {
          return x.beta == y.beta && x.t0 == y.t0 && x.truncation == y.truncation;
        } else if constexpr (std::is_same_v<T, SquarePulse>) {
          return x.amplitude == y.amplitude && x.duration == y.duration;
        } else if constexpr (std::is_same_v<T, IdealRotation>) {
          return x.angle == y.angle;
        } else {
          return x.duration == y.duration;
        }
      },
      a);
}

bool same_program(const SequenceProgram& a, const SequenceProgram& b) {
  if (a.segments.size() != b.segments.size()) return false;
  if (a.repetition_time != b.repetition_time || a.carrier_detuning_hz != b.carrier_detuning_hz) {
    return false;
  }
  for (std::size_t k = 0; k < a.segments.size(); ++k) {
    const auto& x = a.segments[k];
    const auto& y = b.segments[k];
    if (!same_kind(x.kind, y.kind) || x.phase != y.phase || x.start != y.start) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("parses every directive") {
  const auto p = parse_sequence(R"(
# Hahn echo with an ideal refocusing pulse
let A = 1200
set detuning 250kHz
set repetition 10m
pulse gaussian beta=A*2 t0=10u phase=pi/2 trunc=3
delay 90u
pulse ideal angle=pi
delay 40u
pulse square amp=-A/4 dur=500n
acquire 120u
)");
  REQUIRE(p.segments.size() == 6);
  const auto& g = std::get<GaussianPulse>(p.segments[0].kind);
  CHECK(g.beta == 2400.0);
  CHECK(g.t0 == 1e-5);
  CHECK(g.truncation == 3.0);
  CHECK(p.segments[0].phase == doctest::Approx(std::numbers::pi / 2));
  CHECK(p.segments[0].duration() == doctest::Approx(60e-6));
  CHECK(p.segments[1].start == doctest::Approx(60e-6));
  CHECK(std::get<IdealRotation>(p.segments[2].kind).angle == doctest::Approx(std::numbers::pi));
  CHECK(p.segments[2].duration() == 0.0);
  CHECK(std::get<SquarePulse>(p.segments[4].kind).amplitude == -300.0);
  CHECK(p.carrier_detuning_hz == 250e3);
  CHECK(p.repetition_time == 1e-2);
  CHECK(p.duration() == doctest::Approx(60e-6 + 90e-6 + 40e-6 + 0.5e-6 + 120e-6));
  CHECK(emitting_segments(p) == std::vector<std::size_t>{0, 4});
}

TEST_CASE("caller parameters bind and let overrides them in order") {
  const auto p = parse_sequence("pulse ideal angle=theta\nlet theta = 1\npulse ideal angle=theta\n",
                                {{"theta", 0.25}});
  CHECK(std::get<IdealRotation>(p.segments[0].kind).angle == 0.25);
  CHECK(std::get<IdealRotation>(p.segments[1].kind).angle == 1.0);
}

TEST_CASE("errors carry line and column") {
  auto where = [](const std::string& text) -> std::pair<int, int> {
    try {
      parse_sequence(text);
    } catch (const SequenceParseError& e) {
      return {e.line(), e.column()};
    }
    return {0, 0};
  };
  CHECK(where("delay 10u\nfrobnicate 3\n") == std::pair{2, 1});
  CHECK(where("delay 10\n") == std::pair{1, 9});
  CHECK(where("delay 10x\n") == std::pair{1, 9});
  CHECK(where("pulse gaussian beta=1\n").first == 1);
  CHECK(where("pulse square amp=1 dur=1u color=3\n") == std::pair{1, 27});
  CHECK(where("pulse ideal angle=undefined_name\n").first == 1);
  CHECK(where("\n\n  pulse ideal angle=pi extra\n") == std::pair{3, 24});
  CHECK(where("delay -5u\n").first == 1);
  CHECK_THROWS_AS(parse_sequence("let pi = 3\n"), SequenceParseError);
}

TEST_CASE("print/parse round trip is exact") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    SequenceProgram p;
    if (trial % 3 == 0) p.carrier_detuning_hz = u(rng) * 1e4;
    if (trial % 4 == 0) p.repetition_time = u(rng);
    for (int k = 0; k < 8; ++k) {
      switch ((trial + k) % 5) {
        case 0: p.append(GaussianPulse{u(rng) * 1e3, u(rng) * 1e-6, trial % 2 ? 4.0 : u(rng)}, u(rng)); break;
        case 1: p.append(SquarePulse{-u(rng), u(rng) * 1e-7}, u(rng)); break;
        case 2: p.append(IdealRotation{u(rng)}, u(rng)); break;
        case 3: p.append(Delay{u(rng) * 1e-3}); break;
        default: p.append(Acquire{u(rng) * 1e-5}); break;
      }
    }
    const std::string text = print_sequence(p);
    const auto q = parse_sequence(text);
    CHECK(same_program(p, q));
    CHECK(print_sequence(q) == text);
  }
}

TEST_CASE("photon calibration matches the closed form") {
  const double t0 = 10e-6;
  const double beta = gaussian_beta_for_photons(240.0, t0);
  SequenceProgram p;
  const auto& seg = p.append(GaussianPulse{beta, t0, 4.0});
  CHECK(photon_calibration(seg) == doctest::Approx(gaussian_photons(beta, t0, 4.0)).epsilon(1e-9));
  CHECK(gaussian_photons(beta, t0, 4.0) == doctest::Approx(240.0).epsilon(1e-9));
  CHECK(gaussian_photons(beta, t0, 3.0) == doctest::Approx(240.0 * std::erf(3.0 * std::sqrt(2.0))));
  SequenceProgram q;
  const auto& sq = q.append(SquarePulse{30.0, 2e-6});
  CHECK(photon_calibration(sq) == doctest::Approx(900.0 * 2e-6).epsilon(1e-12));
}

TEST_CASE("envelope carries the drive phase and vanishes outside") {
  SequenceProgram p;
  p.append(Delay{1e-6});
  const auto& seg = p.append(SquarePulse{2.0, 1e-6}, std::numbers::pi / 2);
  CHECK(std::abs(seg.envelope(1.5e-6) - std::complex<double>(0.0, 2.0)) < 1e-12);
  CHECK(seg.envelope(0.5e-6) == std::complex<double>(0.0, 0.0));
  CHECK(seg.envelope(2.5e-6) == std::complex<double>(0.0, 0.0));
}

TEST_CASE("Hahn echo layout") {
  const PulseSegment first{GaussianPulse{1.0, 10e-6, 4.0}, 0.0, 0.0};
  const PulseSegment pi{IdealRotation{std::numbers::pi}, 0.0, 0.0};
  const auto p = hahn_echo_program(100e-6, first, pi, 120e-6);
  const double c = p.segments[0].center();
  CHECK(p.segments[2].start == doctest::Approx(c + 100e-6).epsilon(1e-12));
  CHECK(p.segments.back().center() == doctest::Approx(c + 200e-6).epsilon(1e-12));
  CHECK_THROWS_AS(hahn_echo_program(30e-6, first, pi, 120e-6), std::invalid_argument);
}

TEST_CASE("memory train layout") {
  std::vector<double> phases(20);
  for (int k = 0; k < 20; ++k) phases[k] = 0.1 * k;
  MemoryTrainOptions o;
  o.truncation = 3.0;
  const auto p = memory_train_program(20, 60e-6, phases, 240.0, 50e-3, o);
  const auto inputs = emitting_segments(p);
  REQUIRE(inputs.size() == 20);
  const double c0 = p.segments[inputs[0]].center();
  for (int k = 0; k < 20; ++k) {
    CHECK(p.segments[inputs[k]].center() == doctest::Approx(c0 + k * 60e-6).epsilon(1e-12));
    CHECK(p.segments[inputs[k]].phase == phases[k]);
  }
  const auto& acq = p.segments.back();
  REQUIRE(std::holds_alternative<Acquire>(acq.kind));
  CHECK(acq.start <= c0 + 100e-3 - 19 * 60e-6 - 60e-6 + 1e-12);
  CHECK(acq.end() >= c0 + 100e-3 + 60e-6 - 1e-12);
  CHECK_THROWS_AS(memory_train_program(20, 50e-6, phases, 240.0, 50e-3, o), std::invalid_argument);
  CHECK_THROWS_AS(memory_train_program(20, 60e-6, std::vector<double>(3), 240.0, 50e-3, o),
                  std::invalid_argument);
  CHECK_THROWS_AS(memory_train_program(20, 60e-6, phases, 240.0, 1e-3, o), std::invalid_argument);
}
