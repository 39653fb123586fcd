#include "spinmem/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace spinmem {

namespace {

using cd = std::complex<double>;

constexpr std::size_t kLeafSize = 32;

template <class F>
std::pair<double, double> tree_sum2(std::size_t lo, std::size_t hi, const F& f) {
  if (hi - lo <= kLeafSize) {
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto [x, y] = f(i);
      a += x;
      b += y;
    }
    return {a, b};
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  const auto l = tree_sum2(lo, mid, f);
  const auto r = tree_sum2(mid, hi, f);
  return {l.first + r.first, l.second + r.second};
}

double inverse_or_zero(double t) { return std::isinf(t) ? 0.0 : 1.0 / t; }

double effective_inverse_t2(double t1, double t2) {
  return std::max(inverse_or_zero(t2), 0.5 * inverse_or_zero(t1));
}

// Exact solution of the field-free Bloch equations.
void precess(double& sre, double& sim, double& sz, double delta, double inv_t2, double inv_t1,
             double dt) {
  const cd s = cd(sre, sim) * std::exp(cd(-inv_t2 * dt, -delta * dt));
  sre = s.real();
  sim = s.imag();
  sz = 1.0 + (sz - 1.0) * std::exp(-inv_t1 * dt);
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

class Engine {
 public:
  Engine(const SequenceProgram& program, EvolutionState initial, const CavityParams& cavity,
         const IntegratorOptions& options)
      : program_(program), cavity_(cavity), opts_(options), offset_(initial.time) {
    cavity_.validate();
    options.validate();
    program.validate();
    kappa0_ = cavity_.kappa(0.0);
    sqrt_kc_ = std::sqrt(cavity_.kappa_c);
    detuning_ = program.carrier_detuning();
    ds_ = opts_.sample_interval > 0.0 ? opts_.sample_interval : 1.0 / (20.0 * kappa0_);
    threshold_ = opts_.free_evolution_threshold >= 0.0 ? opts_.free_evolution_threshold
                                                      : 10.0 / kappa0_;
    min_settle_ = opts_.min_settle >= 0.0 ? opts_.min_settle : 10.0 / kappa0_;
    max_settle_ = opts_.max_settle >= 0.0 ? opts_.max_settle : 100.0 / kappa0_;
    max_step_ = opts_.max_step > 0.0 ? opts_.max_step : std::numeric_limits<double>::infinity();

    packets_ = std::move(initial.packets);
    n_ = packets_.size();
    delta_.resize(n_);
    g_.resize(n_);
    gw_.resize(n_);
    inv_t1_.resize(n_);
    inv_t2_.resize(n_);
    y_.assign(2 + 3 * n_, 0.0);
    y_[0] = initial.alpha.real();
    y_[1] = initial.alpha.imag();
    for (std::size_t m = 0; m < n_; ++m) {
      const auto& p = packets_[m];
      if (!std::isfinite(p.delta) || !std::isfinite(p.g) || !std::isfinite(p.weight) ||
          p.weight < 0.0 || !(p.t1 > 0.0) || !(p.t2 > 0.0)) {
        throw std::invalid_argument("spin packet " + std::to_string(m) + " is not initialized");
      }
      if (!p.in_bloch_ball(opts_.bloch_tolerance)) {
        throw std::invalid_argument("spin packet " + std::to_string(m) +
                                    " starts outside the Bloch ball");
      }
      delta_[m] = p.delta;
      g_[m] = p.g;
      gw_[m] = p.g * p.weight;
      inv_t1_[m] = inverse_or_zero(p.t1);
      inv_t2_[m] = effective_inverse_t2(p.t1, p.t2);
      sre(y_)[m] = p.s_plus.real();
      sim(y_)[m] = p.s_plus.imag();
      sz(y_)[m] = p.s_z;
    }
    for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) k->resize(y_.size());
    h_ = std::min(ds_, max_step_);
    trace_.sample_interval = ds_;
  }

  EvolveResult run() {
    t_ = offset_;
    next_k_ = 0;
    drive_ = nullptr;
    segment_ = program_.segments.empty() ? -1 : 0;
    record_if_on_grid();
    for (std::size_t s = 0; s < program_.segments.size(); ++s) {
      const auto& seg = program_.segments[s];
      segment_ = static_cast<int>(s);
      if (seg.emits()) quiet_ = false;
      const double start = offset_ + seg.start;
      const double end = offset_ + seg.end();
      // Gaps between segments are free evolution without drive.
      if (start > t_) {
        drive_ = nullptr;
        integrate_span(start, false);
      }
      trace_.events.push_back({TraceEvent::Kind::segment_start, t_, segment_, 0.0});
      if (const auto* rot = std::get_if<IdealRotation>(&seg.kind)) {
        apply_rotation(rot->angle, seg.phase);
        trace_.events.push_back({TraceEvent::Kind::ideal_rotation, t_, segment_, 0.0});
        continue;
      }
      drive_ = seg.emits() ? &seg : nullptr;
      integrate_span(end, opts_.skip_delays && std::holds_alternative<Delay>(seg.kind));
      drive_ = nullptr;
    }
    trace_.events.push_back({TraceEvent::Kind::end, t_, segment_, 0.0});

    EvolveResult out;
    out.trace = std::move(trace_);
    out.final_state.alpha = cd(y_[0], y_[1]);
    out.final_state.time = t_;
    for (std::size_t m = 0; m < n_; ++m) {
      packets_[m].s_plus = cd(sre(y_)[m], sim(y_)[m]);
      packets_[m].s_z = sz(y_)[m];
    }
    out.final_state.packets = std::move(packets_);
    return out;
  }

 private:
  double* sre(std::vector<double>& v) const { return v.data() + 2; }
  double* sim(std::vector<double>& v) const { return v.data() + 2 + n_; }
  double* sz(std::vector<double>& v) const { return v.data() + 2 + 2 * n_; }
  const double* sre(const std::vector<double>& v) const { return v.data() + 2; }
  const double* sim(const std::vector<double>& v) const { return v.data() + 2 + n_; }
  const double* sz(const std::vector<double>& v) const { return v.data() + 2 + 2 * n_; }

  double grid_time(long k) const { return offset_ + static_cast<double>(k) * ds_; }

  cd beta_at(double t) const {
    if (drive_ == nullptr) return {0.0, 0.0};
    const double tp = t - offset_;
    cd b = drive_->envelope(tp);
    if (detuning_ != 0.0) b *= std::polar(1.0, -detuning_ * tp);
    return b;
  }

  void derivative(double t, const std::vector<double>& y, std::vector<double>& dy) const {
    const double ar = y[0];
    const double ai = y[1];
    const double* pr = sre(y);
    const double* pi = sim(y);
    const double* pz = sz(y);
    const auto [sum_re, sum_im] =
        tree_sum2(0, n_, [&](std::size_t m) { return std::pair{gw_[m] * pr[m], gw_[m] * pi[m]}; });
    const double kappa = cavity_.power_dependent() ? cavity_.kappa(ar * ar + ai * ai) : kappa0_;
    const cd b = beta_at(t);
    // -i * (sum_re + i sum_im) = sum_im - i sum_re
    dy[0] = sqrt_kc_ * b.real() - 0.5 * kappa * ar + sum_im;
    dy[1] = sqrt_kc_ * b.imag() - 0.5 * kappa * ai - sum_re;
    double* dr = dy.data() + 2;
    double* di = dr + n_;
    double* dz = di + n_;
    for (std::size_t m = 0; m < n_; ++m) {
      const double gz = g_[m] * pz[m];
      dr[m] = delta_[m] * pi[m] + gz * ai - inv_t2_[m] * pr[m];
      di[m] = -delta_[m] * pr[m] - gz * ar - inv_t2_[m] * pi[m];
      dz[m] = 4.0 * g_[m] * (ar * pi[m] - ai * pr[m]) - inv_t1_[m] * (pz[m] - 1.0);
    }
  }

  // One Dormand-Prince attempt of size h from (t_, y_); returns the error norm.
  double attempt(double h) {
    const std::size_t n = y_.size();
    derivative(t_, y_, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * a21 * k1_[i];
    derivative(t_ + c2 * h, tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    derivative(t_ + c3 * h, tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
    derivative(t_ + c4 * h, tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
    derivative(t_ + c5 * h, tmp_, k5_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] +
                             a65 * k5_[i]);
    derivative(t_ + h, tmp_, k6_);
    for (std::size_t i = 0; i < n; ++i)
      ynew_[i] = y_[i] + h * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
    derivative(t_ + h, ynew_, k7_);

    auto scaled = [&](std::size_t i) {
      const double err = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] +
                              e6 * k6_[i] + e7 * k7_[i]);
      const double sc =
          opts_.abs_tolerance + opts_.tolerance * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
      return err / sc;
    };
    const double field_err = std::max(std::abs(scaled(0)), std::abs(scaled(1)));
    double spin_err = 0.0;
    if (n > 2) {
      double acc = 0.0;
      for (std::size_t i = 2; i < n; ++i) {
        const double e = scaled(i);
        acc += e * e;
      }
      spin_err = std::sqrt(acc / static_cast<double>(n - 2));
    }
    const double err = std::max(field_err, spin_err);
    return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
  }

  // Adaptive steps from t_ to exactly `target`.
  void integrate_to(double target) {
    while (t_ < target) {
      const double remaining = target - t_;
      double h = std::min({h_, max_step_, remaining});
      bool last = h >= remaining;
      for (;;) {
        if (h < 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_)) ||
            h < 1e-18) {
          std::ostringstream msg;
          msg << "step size underflow at t = " << t_ << " s";
          throw IntegrationError(msg.str());
        }
        const double err = attempt(h);
        if (err <= 1.0) {
          const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
          std::swap(y_, ynew_);
          t_ = last ? target : t_ + h;
          // Do not let a short landing step shrink the next one.
          if (!last || factor < 1.0) h_ = h * factor;
          break;
        }
        h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
        last = false;
      }
      check_state();
    }
  }

  void check_state() const {
    if (!std::isfinite(y_[0]) || !std::isfinite(y_[1])) {
      throw IntegrationError("cavity field became non-finite");
    }
    const double* pr = sre(y_);
    const double* pi = sim(y_);
    const double* pz = sz(y_);
    const double tol = opts_.bloch_tolerance;
    for (std::size_t m = 0; m < n_; ++m) {
      const double lhs = pr[m] * pr[m] + pi[m] * pi[m];
      if (!(lhs <= 0.25 * (1.0 - pz[m] * pz[m]) + tol) || !(std::abs(pz[m]) <= 1.0 + tol)) {
        std::ostringstream msg;
        msg << "Bloch-ball violation for packet " << m << " at t = " << t_ << " s";
        throw IntegrationError(msg.str());
      }
    }
  }

  void record_if_on_grid() {
    const double tg = grid_time(next_k_);
    if (std::abs(tg - t_) <= 1e-6 * ds_) {
      const cd a(y_[0], y_[1]);
      const cd b = beta_at(t_);
      trace_.times.push_back(tg);
      trace_.alpha.push_back(a);
      trace_.beta_in.push_back(b);
      trace_.a_out.push_back(sqrt_kc_ * a - b);
      trace_.segment_id.push_back(segment_);
      ++next_k_;
    }
  }

  void advance_grid_past(double t) {
    while (grid_time(next_k_) < t - 1e-6 * ds_) ++next_k_;
  }

  void integrate_span(double end, bool may_skip) {
    const double start = t_;
    if (!may_skip) quiet_ = false;
    // Nothing has driven the cavity since the last skip (ideal rotations
    // included): keep skipping rather than integrate a settled interval.
    if (may_skip && quiet_ && end - t_ > threshold_ &&
        y_[0] * y_[0] + y_[1] * y_[1] < opts_.field_floor) {
      skip(end - t_, TraceEvent::Kind::skip);
      t_ = end;
      advance_grid_past(t_);
      record_if_on_grid();
      return;
    }
    quiet_ = false;
    while (t_ < end) {
      double target = grid_time(next_k_);
      if (target > end - 1e-6 * ds_) target = end;
      integrate_to(target);
      record_if_on_grid();
      if (!may_skip) continue;
      const double remaining = end - t_;
      if (remaining <= threshold_) continue;
      const double elapsed = t_ - start;
      const double n_cav = y_[0] * y_[0] + y_[1] * y_[1];
      const bool settled = elapsed >= min_settle_ && n_cav < opts_.field_floor;
      if (settled || elapsed >= max_settle_) {
        skip(remaining, settled ? TraceEvent::Kind::skip : TraceEvent::Kind::forced_skip);
        quiet_ = true;
        t_ = end;
        advance_grid_past(t_);
        record_if_on_grid();
      }
    }
  }

  void skip(double dt, TraceEvent::Kind kind) {
    trace_.events.push_back({kind, t_, segment_, dt});
    double* pr = sre(y_);
    double* pi = sim(y_);
    double* pz = sz(y_);
    for (std::size_t m = 0; m < n_; ++m) {
      precess(pr[m], pi[m], pz[m], delta_[m], inv_t2_[m], inv_t1_[m], dt);
    }
    const double kappa = cavity_.kappa(y_[0] * y_[0] + y_[1] * y_[1]);
    const double decay = std::exp(-0.5 * kappa * dt);
    y_[0] *= decay;
    y_[1] *= decay;
  }

  void apply_rotation(double angle, double phase) {
    std::vector<SpinPacket> tmp(n_);
    for (std::size_t m = 0; m < n_; ++m) {
      tmp[m].s_plus = cd(sre(y_)[m], sim(y_)[m]);
      tmp[m].s_z = sz(y_)[m];
    }
    apply_ideal_pulse(tmp, angle, phase);
    for (std::size_t m = 0; m < n_; ++m) {
      sre(y_)[m] = tmp[m].s_plus.real();
      sim(y_)[m] = tmp[m].s_plus.imag();
      sz(y_)[m] = tmp[m].s_z;
    }
  }

  const SequenceProgram& program_;
  CavityParams cavity_;
  IntegratorOptions opts_;
  double offset_;
  double kappa0_ = 0.0;
  double sqrt_kc_ = 0.0;
  double detuning_ = 0.0;
  double ds_ = 0.0;
  double threshold_ = 0.0;
  double min_settle_ = 0.0;
  double max_settle_ = 0.0;
  double max_step_ = 0.0;
  double h_ = 0.0;

  std::vector<SpinPacket> packets_;
  std::size_t n_ = 0;
  std::vector<double> delta_, g_, gw_, inv_t1_, inv_t2_;
  std::vector<double> y_, ynew_, tmp_, k1_, k2_, k3_, k4_, k5_, k6_, k7_;

  double t_ = 0.0;
  long next_k_ = 0;
  const PulseSegment* drive_ = nullptr;
  int segment_ = -1;
  bool quiet_ = false;
  Trace trace_;
};

}  // namespace

void IntegratorOptions::validate() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument("integrator tolerance must be positive");
  if (!(abs_tolerance > 0.0)) throw std::invalid_argument("absolute tolerance must be positive");
  if (!(max_step >= 0.0)) throw std::invalid_argument("max_step must be non-negative");
  if (!(sample_interval >= 0.0)) throw std::invalid_argument("sample interval must be non-negative");
  if (!(field_floor > 0.0)) throw std::invalid_argument("field floor must be positive");
  if (!(bloch_tolerance > 0.0)) throw std::invalid_argument("Bloch tolerance must be positive");
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << "t_s,alpha_re,alpha_im,aout_re,aout_im,segment_id\n";
  const auto old = out.precision(17);
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out << trace.times[k] << ',' << trace.alpha[k].real() << ',' << trace.alpha[k].imag() << ','
        << trace.a_out[k].real() << ',' << trace.a_out[k].imag() << ',' << trace.segment_id[k]
        << '\n';
  }
  out.precision(old);
}

EvolveResult evolve(const SequenceProgram& program, std::vector<SpinPacket> packets,
                    const CavityParams& cavity, const IntegratorOptions& options) {
  EvolutionState state;
  state.packets = std::move(packets);
  return evolve(program, std::move(state), cavity, options);
}

EvolveResult evolve(const SequenceProgram& program, EvolutionState initial,
                    const CavityParams& cavity, const IntegratorOptions& options) {
  Engine engine(program, std::move(initial), cavity, options);
  return engine.run();
}

double effective_t2(const SpinPacket& packet) {
  const double inv = effective_inverse_t2(packet.t1, packet.t2);
  return inv == 0.0 ? kNoRelaxation : 1.0 / inv;
}

void free_evolution_skip(std::vector<SpinPacket>& packets, double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("skip interval must be finite and >= 0");
  for (auto& p : packets) {
    double r = p.s_plus.real();
    double i = p.s_plus.imag();
    precess(r, i, p.s_z, p.delta, effective_inverse_t2(p.t1, p.t2), inverse_or_zero(p.t1), dt);
    p.s_plus = cd(r, i);
  }
}

void free_evolution_skip(EvolutionState& state, const CavityParams& cavity, double dt,
                         const SequenceProgram* program) {
  if (program != nullptr) {
    for (const auto& seg : program->segments) {
      if (seg.emits() && seg.start < state.time + dt && seg.end() > state.time) {
        throw std::logic_error("free-evolution skip requested while a pulse is active");
      }
    }
  }
  free_evolution_skip(state.packets, dt);
  state.alpha *= std::exp(-0.5 * cavity.kappa(std::norm(state.alpha)) * dt);
  state.time += dt;
}

void apply_ideal_pulse(std::vector<SpinPacket>& packets, double angle, double axis_phase) {
  const double nx = std::cos(axis_phase);
  const double ny = std::sin(axis_phase);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (auto& p : packets) {
    // Bloch vector normalized to the unit ball.
    const double vx = 2.0 * p.s_plus.real();
    const double vy = 2.0 * p.s_plus.imag();
    const double vz = p.s_z;
    const double dot = nx * vx + ny * vy;
    // n x v with n = (nx, ny, 0)
    const double cx = ny * vz;
    const double cy = -nx * vz;
    const double cz = nx * vy - ny * vx;
    const double rx = vx * c + cx * s + nx * dot * (1.0 - c);
    const double ry = vy * c + cy * s + ny * dot * (1.0 - c);
    const double rz = vz * c + cz * s;
    p.s_plus = cd(0.5 * rx, 0.5 * ry);
    p.s_z = rz;
  }
}

std::complex<double> steady_state_amplitudes(double cooperativity, double kappa_c, double kappa,
                                             std::complex<double> beta, SteadyStateMode mode) {
  if (!(cooperativity >= 0.0)) throw std::invalid_argument("cooperativity must be >= 0");
  if (!(kappa_c >= 0.0) || !(kappa > 0.0) || kappa_c > kappa) {
    throw std::invalid_argument("need 0 <= kappa_c <= kappa and kappa > 0");
  }
  const double c = cooperativity;
  const double pre = std::sqrt(kappa_c) / kappa;
  switch (mode) {
    case SteadyStateMode::storage:
      return pre * 2.0 / (1.0 + c) * beta;
    case SteadyStateMode::retrieval_single_pi:
      if (std::abs(1.0 - c) < 1e-12) {
        throw std::domain_error(
            "single-pi retrieval diverges at C = 1 (transient maser regime)");
      }
      return -pre * 4.0 * c / ((1.0 + c) * (1.0 - c)) * beta;
    case SteadyStateMode::retrieval_two_pi:
      return -pre * 4.0 * c / ((1.0 + c) * (1.0 + c)) * beta;
  }
  throw std::invalid_argument("unknown steady-state mode");
}

double pairwise_sum(std::span<const double> values) {
  return tree_sum2(0, values.size(), [&](std::size_t i) { return std::pair{values[i], 0.0}; })
      .first;
}

std::vector<std::complex<double>> rabi_experiment(std::string_view sequence_template,
                                                  const std::string& parameter,
                                                  std::span<const double> values,
                                                  const std::vector<SpinPacket>& packets,
                                                  const CavityParams& cavity,
                                                  const TraceReadout& readout,
                                                  const IntegratorOptions& options) {
  if (!readout) throw std::invalid_argument("rabi experiment needs a readout");
  std::vector<std::complex<double>> out;
  out.reserve(values.size());
  for (const double v : values) {
    const SequenceProgram program = parse_sequence(sequence_template, {{parameter, v}});
    out.push_back(readout(evolve(program, packets, cavity, options).trace));
  }
  return out;
}

}  // namespace spinmem
