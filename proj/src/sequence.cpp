#include "spinmem/sequence.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <sstream>

namespace spinmem {

namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Parser

struct Token {
  std::string text;
  int column = 0;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    const std::size_t begin = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({std::string(line.substr(begin, i - begin)), static_cast<int>(begin) + 1});
  }
  return out;
}

class ExpressionReader {
 public:
  ExpressionReader(std::string_view text, int line, int column, const ParameterMap& params)
      : text_(text), line_(line), column_(column), params_(params) {}

  /// Parses a product/quotient expression; leaves pos_ after it.
  double product() {
    double value = atom();
    while (pos_ < text_.size() && (text_[pos_] == '*' || text_[pos_] == '/')) {
      const char op = text_[pos_++];
      const double rhs = atom();
      value = op == '*' ? value * rhs : value / rhs;
    }
    return value;
  }

  std::string_view rest() const { return text_.substr(pos_); }
  int rest_column() const { return column_ + static_cast<int>(pos_); }

  [[noreturn]] void fail(const std::string& message) const {
    throw SequenceParseError(line_, column_ + static_cast<int>(pos_), message);
  }

 private:
  double atom() {
    if (pos_ >= text_.size()) fail("expected a value");
    if (text_[pos_] == '-') {
      ++pos_;
      return -atom();
    }
    if (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_') {
      const std::size_t begin = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string_view name = text_.substr(begin, pos_ - begin);
      if (name == "pi") return kPi;
      const auto it = params_.find(name);
      if (it == params_.end()) {
        pos_ = begin;
        fail("unbound parameter '" + std::string(name) + "'");
      }
      return it->second;
    }
    const std::string buffer(text_.substr(pos_));
    const char* begin = buffer.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    return value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
  int column_;
  const ParameterMap& params_;
};

double parse_value(const Token& tok, std::string_view text, int column, int line,
                   const ParameterMap& params) {
  ExpressionReader reader(text, line, column, params);
  const double v = reader.product();
  if (!reader.rest().empty()) {
    throw SequenceParseError(line, reader.rest_column(),
                             "unexpected trailing text '" + std::string(reader.rest()) + "' in '" +
                                 tok.text + "'");
  }
  if (!std::isfinite(v)) throw SequenceParseError(line, column, "value is not finite");
  return v;
}

double parse_duration(std::string_view text, int column, int line, const ParameterMap& params) {
  ExpressionReader reader(text, line, column, params);
  double v = reader.product();
  const std::string_view unit = reader.rest();
  // Dividing by exact powers of ten keeps "10u" == 1e-5 exactly.
  if (unit == "s") {
  } else if (unit == "m") {
    v /= 1e3;
  } else if (unit == "u") {
    v /= 1e6;
  } else if (unit == "n") {
    v /= 1e9;
  } else if (unit.empty()) {
    throw SequenceParseError(line, reader.rest_column(),
                             "duration needs a unit suffix (n, u, m or s)");
  } else {
    throw SequenceParseError(line, reader.rest_column(),
                             "unknown time unit '" + std::string(unit) + "'");
  }
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw SequenceParseError(line, column, "duration must be positive");
  }
  return v;
}

struct KeyValue {
  std::string value;
  int column = 0;        // of the whole token
  int value_column = 0;  // of the value text
  bool used = false;
};

class Fields {
 public:
  Fields(const std::vector<Token>& tokens, std::size_t first, int line) : line_(line) {
    for (std::size_t k = first; k < tokens.size(); ++k) {
      const auto& tok = tokens[k];
      const auto eq = tok.text.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw SequenceParseError(line, tok.column, "expected key=value, got '" + tok.text + "'");
      }
      const std::string key = tok.text.substr(0, eq);
      if (map_.count(key)) throw SequenceParseError(line, tok.column, "duplicate field '" + key + "'");
      map_[key] = {tok.text.substr(eq + 1), tok.column, tok.column + static_cast<int>(eq) + 1};
    }
  }

  const KeyValue* find(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  const KeyValue& require(const std::string& key, const std::string& what, int column) {
    if (const auto* kv = find(key)) return *kv;
    throw SequenceParseError(line_, column, what + " is missing required field '" + key + "'");
  }

  void reject_unused() const {
    for (const auto& [key, kv] : map_) {
      if (!kv.used) throw SequenceParseError(line_, kv.column, "unknown field '" + key + "'");
    }
  }

 private:
  int line_;
  std::map<std::string, KeyValue> map_;
};

}  // namespace

// ---------------------------------------------------------------------------

SequenceParseError::SequenceParseError(int line, int column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + message),
      line_(line),
      column_(column) {}

double PulseSegment::duration() const {
  return std::visit(Overloaded{
                        [](const GaussianPulse& g) { return 2.0 * g.truncation * g.t0; },
                        [](const SquarePulse& s) { return s.duration; },
                        [](const Delay& d) { return d.duration; },
                        [](const Acquire& a) { return a.duration; },
                        [](const IdealRotation&) { return 0.0; },
                    },
                    kind);
}

bool PulseSegment::emits() const {
  return std::holds_alternative<GaussianPulse>(kind) || std::holds_alternative<SquarePulse>(kind);
}

std::complex<double> PulseSegment::envelope(double t) const {
  if (t < start || t > end()) return {0.0, 0.0};
  const std::complex<double> rot = std::polar(1.0, phase);
  if (const auto* g = std::get_if<GaussianPulse>(&kind)) {
    const double x = (t - center()) / g->t0;
    return g->beta * std::exp(-x * x) * rot;
  }
  if (const auto* s = std::get_if<SquarePulse>(&kind)) return s->amplitude * rot;
  return {0.0, 0.0};
}

double SequenceProgram::carrier_detuning() const { return 2.0 * kPi * carrier_detuning_hz; }

double SequenceProgram::duration() const {
  return segments.empty() ? 0.0 : segments.back().end();
}

PulseSegment& SequenceProgram::append(SegmentKind kind, double phase) {
  PulseSegment seg{std::move(kind), phase, duration()};
  segments.push_back(std::move(seg));
  return segments.back();
}

void SequenceProgram::validate() const {
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    const bool ok = std::visit(
        Overloaded{
            [](const GaussianPulse& g) {
              return g.t0 > 0.0 && g.truncation > 0.0 && std::isfinite(g.beta);
            },
            [](const SquarePulse& s) { return s.duration > 0.0 && std::isfinite(s.amplitude); },
            [](const Delay& d) { return d.duration > 0.0; },
            [](const Acquire& a) { return a.duration > 0.0; },
            [](const IdealRotation& r) { return std::isfinite(r.angle); },
        },
        seg.kind);
    if (!ok || !std::isfinite(seg.phase) || !(seg.start >= 0.0)) {
      throw std::invalid_argument("segment " + std::to_string(k) +
                                  " has a non-positive duration or invalid parameter");
    }
    if (k > 0) {
      const double prev_end = segments[k - 1].end();
      if (seg.start < prev_end - 1e-12 * std::max(1.0, std::abs(prev_end))) {
        throw std::invalid_argument("segment " + std::to_string(k) +
                                    " overlaps the previous segment or is out of order");
      }
    }
  }
  if (repetition_time > 0.0 && duration() > repetition_time) {
    throw std::invalid_argument("sequence is longer than its repetition time");
  }
}

SequenceProgram parse_sequence(std::string_view text, const ParameterMap& parameters) {
  SequenceProgram program;
  ParameterMap params = parameters;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    const std::string& directive = tokens[0].text;

    if (directive == "pulse") {
      if (tokens.size() < 2) throw SequenceParseError(line_no, tokens[0].column, "pulse needs a shape");
      const std::string& shape = tokens[1].text;
      Fields fields(tokens, 2, line_no);
      auto value = [&](const KeyValue& kv) {
        return parse_value({kv.value, kv.column}, kv.value, kv.value_column, line_no, params);
      };
      auto duration = [&](const KeyValue& kv) {
        return parse_duration(kv.value, kv.value_column, line_no, params);
      };
      double phase = 0.0;
      if (const auto* kv = fields.find("phase")) phase = value(*kv);
      const std::string what = "pulse " + shape;
      if (shape == "gaussian") {
        GaussianPulse g;
        g.beta = value(fields.require("beta", what, tokens[1].column));
        g.t0 = duration(fields.require("t0", what, tokens[1].column));
        if (const auto* kv = fields.find("trunc")) {
          g.truncation = value(*kv);
          if (!(g.truncation > 0.0)) throw SequenceParseError(line_no, kv->value_column, "trunc must be positive");
        }
        fields.reject_unused();
        program.append(g, phase);
      } else if (shape == "square") {
        SquarePulse s;
        s.amplitude = value(fields.require("amp", what, tokens[1].column));
        s.duration = duration(fields.require("dur", what, tokens[1].column));
        fields.reject_unused();
        program.append(s, phase);
      } else if (shape == "ideal") {
        IdealRotation r;
        r.angle = value(fields.require("angle", what, tokens[1].column));
        fields.reject_unused();
        program.append(r, phase);
      } else {
        throw SequenceParseError(line_no, tokens[1].column, "unknown pulse shape '" + shape + "'");
      }
    } else if (directive == "delay" || directive == "acquire") {
      if (tokens.size() != 2) {
        throw SequenceParseError(line_no, tokens[0].column, directive + " takes exactly one duration");
      }
      const double d = parse_duration(tokens[1].text, tokens[1].column, line_no, params);
      if (directive == "delay") {
        program.append(Delay{d});
      } else {
        program.append(Acquire{d});
      }
    } else if (directive == "set") {
      if (tokens.size() != 3) {
        throw SequenceParseError(line_no, tokens[0].column, "set takes a name and a value");
      }
      if (tokens[1].text == "detuning") {
        std::string v = tokens[2].text;
        if (v.size() > 2 && v.ends_with("Hz")) v.resize(v.size() - 2);
        double scale = 1.0;
        if (v.size() > 1 && (std::isdigit(static_cast<unsigned char>(v[v.size() - 2])) ||
                             v[v.size() - 2] == '.')) {
          switch (v.back()) {
            case 'k': scale = 1e3; break;
            case 'M': scale = 1e6; break;
            case 'G': scale = 1e9; break;
            default: break;
          }
          if (scale != 1.0) v.pop_back();
        }
        program.carrier_detuning_hz =
            scale * parse_value(tokens[2], v, tokens[2].column, line_no, params);
      } else if (tokens[1].text == "repetition") {
        program.repetition_time = parse_duration(tokens[2].text, tokens[2].column, line_no, params);
      } else {
        throw SequenceParseError(line_no, tokens[1].column, "unknown setting '" + tokens[1].text + "'");
      }
    } else if (directive == "let") {
      if (tokens.size() != 4 || tokens[2].text != "=") {
        throw SequenceParseError(line_no, tokens[0].column, "expected 'let <name> = <value>'");
      }
      const std::string& name = tokens[1].text;
      if (name.empty() || !(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_') ||
          name == "pi") {
        throw SequenceParseError(line_no, tokens[1].column, "invalid parameter name '" + name + "'");
      }
      params[name] = parse_value(tokens[3], tokens[3].text, tokens[3].column, line_no, params);
    } else {
      throw SequenceParseError(line_no, tokens[0].column, "unknown directive '" + directive + "'");
    }
  }
  try {
    program.validate();
  } catch (const std::invalid_argument& e) {
    throw SequenceParseError(line_no, 1, e.what());
  }
  return program;
}

std::string print_sequence(const SequenceProgram& program) {
  std::ostringstream out;
  if (program.carrier_detuning_hz != 0.0) {
    out << "set detuning " << format_number(program.carrier_detuning_hz) << "\n";
  }
  if (program.repetition_time > 0.0) {
    out << "set repetition " << format_number(program.repetition_time) << "s\n";
  }
  for (const auto& seg : program.segments) {
    std::visit(Overloaded{
                   [&](const GaussianPulse& g) {
                     out << "pulse gaussian beta=" << format_number(g.beta)
                         << " t0=" << format_number(g.t0) << "s phase=" << format_number(seg.phase);
                     if (g.truncation != 4.0) out << " trunc=" << format_number(g.truncation);
                     out << "\n";
                   },
                   [&](const SquarePulse& s) {
                     out << "pulse square amp=" << format_number(s.amplitude)
                         << " dur=" << format_number(s.duration)
                         << "s phase=" << format_number(seg.phase) << "\n";
                   },
                   [&](const IdealRotation& r) {
                     out << "pulse ideal angle=" << format_number(r.angle)
                         << " phase=" << format_number(seg.phase) << "\n";
                   },
                   [&](const Delay& d) { out << "delay " << format_number(d.duration) << "s\n"; },
                   [&](const Acquire& a) { out << "acquire " << format_number(a.duration) << "s\n"; },
               },
               seg.kind);
  }
  return out.str();
}

double photon_calibration(const PulseSegment& segment, int intervals) {
  if (!segment.emits()) {
    throw std::invalid_argument("photon calibration needs a gaussian or square pulse");
  }
  if (intervals < 2) intervals = 2;
  if (intervals % 2) ++intervals;
  const double a = segment.start;
  const double h = segment.duration() / intervals;
  double sum = 0.0;
  for (int k = 0; k <= intervals; ++k) {
    const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    // Evaluate strictly inside the support to avoid the end() comparison.
    const double t = k == intervals ? segment.end() : a + k * h;
    sum += w * std::norm(segment.envelope(t));
  }
  return sum * h / 3.0;
}

double gaussian_photons(double beta, double t0, double truncation) {
  return beta * beta * t0 * std::sqrt(kPi / 2.0) * std::erf(std::sqrt(2.0) * truncation);
}

double gaussian_beta_for_photons(double n_in, double t0) {
  if (!(n_in >= 0.0) || !(t0 > 0.0)) throw std::invalid_argument("need n_in >= 0 and t0 > 0");
  return std::sqrt(n_in / (t0 * std::sqrt(kPi / 2.0)));
}

SequenceProgram hahn_echo_program(double tau, const PulseSegment& first, const PulseSegment& refocus,
                                  double acquire_window) {
  if (!(acquire_window > 0.0)) throw std::invalid_argument("acquisition window must be positive");
  SequenceProgram program;
  const double first_center = program.append(first.kind, first.phase).center();
  const double refocus_start = first_center + tau - 0.5 * refocus.duration();
  const double gap1 = refocus_start - program.duration();
  if (gap1 < 0.0) {
    throw std::invalid_argument("tau is too short: the refocusing pulse would overlap the first pulse");
  }
  if (gap1 > 0.0) program.append(Delay{gap1});
  program.append(refocus.kind, refocus.phase);
  const double acquire_start = first_center + 2.0 * tau - 0.5 * acquire_window;
  const double gap2 = acquire_start - program.duration();
  if (gap2 < 0.0) {
    throw std::invalid_argument("tau is too short: the acquisition window overlaps the refocusing pulse");
  }
  if (gap2 > 0.0) program.append(Delay{gap2});
  program.append(Acquire{acquire_window});
  program.validate();
  return program;
}

SequenceProgram memory_train_program(int n_pulses, double spacing, std::span<const double> phases,
                                     double n_in, double tau, const MemoryTrainOptions& options) {
  if (n_pulses < 1) throw std::invalid_argument("memory train needs at least one pulse");
  if (!phases.empty() && static_cast<int>(phases.size()) != n_pulses) {
    throw std::invalid_argument("phase list length must equal the number of pulses");
  }
  const double pulse_width = 2.0 * options.truncation * options.t0;
  if (n_pulses > 1 && spacing < pulse_width * (1.0 - 1e-12)) {
    throw std::invalid_argument("pulse spacing is shorter than the truncated pulse length");
  }
  if (!(n_pulses * spacing < tau)) throw std::invalid_argument("memory train requires n_pulses * spacing < tau");

  GaussianPulse pulse{gaussian_beta_for_photons(n_in, options.t0), options.t0, options.truncation};
  SequenceProgram program;
  double first_center = 0.0;
  for (int k = 0; k < n_pulses; ++k) {
    const double phase = phases.empty() ? 0.0 : phases[k];
    if (k > 0) {
      const double gap = first_center + k * spacing - 0.5 * pulse_width - program.duration();
      if (gap > 0.0) program.append(Delay{gap});
    }
    const double c = program.append(pulse, phase).center();
    if (k == 0) first_center = c;
  }
  const double refocus_start = first_center + tau - 0.5 * options.refocus.duration();
  const double gap1 = refocus_start - program.duration();
  if (gap1 < 0.0) throw std::invalid_argument("refocusing pulse overlaps the input train");
  if (gap1 > 0.0) program.append(Delay{gap1});
  program.append(options.refocus.kind, options.refocus.phase);

  const double margin = options.acquire_margin >= 0.0 ? options.acquire_margin : pulse_width;
  const double last_echo = first_center + 2.0 * tau;
  const double first_echo = last_echo - (n_pulses - 1) * spacing;
  const double gap2 = first_echo - margin - program.duration();
  if (gap2 < 0.0) throw std::invalid_argument("echo window overlaps the refocusing pulse");
  if (gap2 > 0.0) program.append(Delay{gap2});
  program.append(Acquire{last_echo - first_echo + 2.0 * margin});
  program.validate();
  return program;
}

std::vector<std::size_t> emitting_segments(const SequenceProgram& program) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < program.segments.size(); ++k) {
    if (program.segments[k].emits()) out.push_back(k);
  }
  return out;
}

}  // namespace spinmem
