#include "spinmem/config.hpp"

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace spinmem {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double prefix_scale(std::string_view p) {
  if (p.empty()) return 1.0;
  if (p == "p") return 1e-12;
  if (p == "n") return 1e-9;
  if (p == "u" || p == "µ") return 1e-6;
  if (p == "m") return 1e-3;
  if (p == "k") return 1e3;
  if (p == "M") return 1e6;
  if (p == "G") return 1e9;
  return 0.0;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

long parse_integer(std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("expected an integer, got '" + s + "'");
  return out;
}

}  // namespace

double parse_si_value(std::string_view text, std::string_view unit) {
  text = trim(text);
  const std::string buffer(text);
  char* end = nullptr;
  const double number = std::strtod(buffer.c_str(), &end);
  if (end == buffer.c_str()) throw ConfigError("expected a number, got '" + buffer + "'");
  std::string_view rest = trim(std::string_view(buffer).substr(end - buffer.c_str()));
  if (!unit.empty() && rest.ends_with(unit)) rest = trim(rest.substr(0, rest.size() - unit.size()));
  const double scale = prefix_scale(rest);
  if (scale == 0.0) {
    throw ConfigError("unrecognized unit in '" + buffer + "'" +
                      (unit.empty() ? std::string() : " (expected " + std::string(unit) + ")"));
  }
  const double v = number * scale;
  if (!std::isfinite(v)) throw ConfigError("value '" + buffer + "' is not finite");
  return v;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.cavity.omega0 = kTwoPi * 7.338e9;
  c.cavity.kappa_c = 4.0e5;
  c.cavity.kappa_i_fixed = 9.0e5;
  c.ensemble.lineshape = SquareLine{10.0 * c.cavity.kappa()};
  c.ensemble.coupling = kTwoPi * 40.0;
  c.ensemble.spectral_density = 1.0;
  c.ensemble.t2 = 0.3;
  c.target_cooperativity = 0.035;
  c.amplifier.n_id = 3.5;
  return c;
}

EnsembleSpec ExperimentConfig::resolved_ensemble() const {
  if (target_cooperativity) return with_cooperativity(ensemble, cavity, *target_cooperativity);
  return ensemble;
}

void ExperimentConfig::validate() const {
  spin.validate();
  cavity.validate();
  integrator.validate();
  amplifier.validate();
  if (target_cooperativity && !(*target_cooperativity >= 0.0)) {
    throw ConfigError("cooperativity must be >= 0");
  }
  if (packets < 16) throw ConfigError("packets must be at least 16");
  if (shots < 100) throw ConfigError("shots must be at least 100");
  resolved_ensemble().validate();
}

ExperimentConfig parse_config(std::string_view text, const std::string& base_dir) {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.source_text = std::string(text);
  const std::filesystem::path base(base_dir);

  // Lineshape pieces are assembled after all keys are read.
  std::string lineshape = "square";
  std::optional<double> width;
  std::string line_table;
  bool density_given = false;
  bool cooperativity_given = false;
  std::optional<double> kappa_i;
  TlsParams tls;
  bool tls_given = false;

  auto resolve = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p)) throw ConfigError("referenced file not found: " + p.string());
    return p.string();
  };
  auto freq = [](std::string_view v) { return kTwoPi * parse_si_value(v, "Hz"); };
  auto rate = [](std::string_view v) { return parse_si_value(v, "/s"); };
  auto time = [](std::string_view v) { return parse_si_value(v, "s"); };
  auto plain = [](std::string_view v) { return parse_si_value(v, ""); };

  using Setter = std::function<void(std::string_view)>;
  const std::map<std::string, Setter> setters = {
      {"spin.gamma_e", [&](auto v) { c.spin.gamma_e = kTwoPi * parse_si_value(v, "Hz/T"); }},
      {"spin.gamma_n", [&](auto v) { c.spin.gamma_n = kTwoPi * parse_si_value(v, "Hz/T"); }},
      {"spin.hyperfine", [&](auto v) { c.spin.hyperfine_a = freq(v); }},
      {"cavity.omega0", [&](auto v) { c.cavity.omega0 = freq(v); }},
      {"cavity.kappa_c", [&](auto v) { c.cavity.kappa_c = rate(v); }},
      {"cavity.kappa_i", [&](auto v) { kappa_i = rate(v); }},
      {"cavity.tls_kappa0", [&](auto v) { tls.kappa_tls0 = rate(v); tls_given = true; }},
      {"cavity.tls_n_sat", [&](auto v) { tls.n_sat = plain(v); tls_given = true; }},
      {"cavity.tls_kappa_res", [&](auto v) { tls.kappa_res = rate(v); tls_given = true; }},
      {"ensemble.lineshape", [&](auto v) { lineshape = std::string(v); }},
      {"ensemble.width", [&](auto v) { width = freq(v); }},
      {"ensemble.table", [&](auto v) { line_table = resolve(v); }},
      {"ensemble.g0", [&](auto v) { c.ensemble.coupling = freq(v); }},
      {"ensemble.coupling_table",
       [&](auto v) { c.ensemble.coupling = CouplingTable::load(resolve(v)); }},
      {"ensemble.density",
       [&](auto v) { c.ensemble.spectral_density = plain(v); density_given = true; }},
      {"ensemble.cooperativity",
       [&](auto v) { c.target_cooperativity = plain(v); cooperativity_given = true; }},
      {"ensemble.t2",
       [&](auto v) { c.ensemble.t2 = v == "inf" ? kNoRelaxation : time(v); }},
      {"ensemble.packets", [&](auto v) { c.packets = static_cast<int>(parse_integer(v)); }},
      {"ensemble.placement",
       [&](auto v) {
         if (v == "quantile") {
           c.discretization.placement = Placement::quantile;
         } else if (v == "uniform") {
           c.discretization.placement = Placement::uniform;
         } else if (v == "stratified") {
           c.discretization.placement = Placement::stratified;
         } else {
           throw ConfigError("unknown placement '" + std::string(v) + "'");
         }
       }},
      {"ensemble.seed",
       [&](auto v) { c.discretization.seed = static_cast<std::uint64_t>(parse_integer(v)); }},
      {"sequence.file", [&](auto v) { c.sequence_file = resolve(v); }},
      {"integrator.tolerance", [&](auto v) { c.integrator.tolerance = plain(v); }},
      {"integrator.abs_tolerance", [&](auto v) { c.integrator.abs_tolerance = plain(v); }},
      {"integrator.max_step", [&](auto v) { c.integrator.max_step = time(v); }},
      {"integrator.sample_interval", [&](auto v) { c.integrator.sample_interval = time(v); }},
      {"integrator.skip_threshold",
       [&](auto v) { c.integrator.free_evolution_threshold = time(v); }},
      {"integrator.field_floor", [&](auto v) { c.integrator.field_floor = plain(v); }},
      {"integrator.skip_delays", [&](auto v) { c.integrator.skip_delays = parse_bool(v); }},
      {"amplifier.gain", [&](auto v) { c.amplifier.gain = plain(v); }},
      {"amplifier.n_id", [&](auto v) { c.amplifier.n_id = plain(v); }},
      {"amplifier.seed",
       [&](auto v) { c.amplifier.seed = static_cast<std::uint64_t>(parse_integer(v)); }},
      {"amplifier.shots", [&](auto v) { c.shots = static_cast<int>(parse_integer(v)); }},
      {"output.directory", [&](auto v) { c.output_dir = std::string(v); }},
  };

  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    } catch (const std::exception& e) {
      throw ConfigError(where + e.what());
    }
  }

  if (kappa_i && tls_given) throw ConfigError("give either kappa_i or the tls_* keys, not both");
  if (tls_given) {
    c.cavity.kappa_i_fixed.reset();
    c.cavity.tls = tls;
  } else if (kappa_i) {
    c.cavity.kappa_i_fixed = *kappa_i;
  }

  if (lineshape == "square") {
    c.ensemble.lineshape = SquareLine{width.value_or(10.0 * c.cavity.kappa())};
  } else if (lineshape == "lorentzian") {
    if (!width) throw ConfigError("a lorentzian line needs 'width' (FWHM)");
    c.ensemble.lineshape = LorentzianLine{*width};
  } else if (lineshape == "table") {
    if (line_table.empty()) throw ConfigError("a tabulated line needs 'table'");
    c.ensemble.lineshape = TabulatedLine::load(line_table);
  } else {
    throw ConfigError("unknown lineshape '" + lineshape + "'");
  }
  if (density_given && cooperativity_given) {
    throw ConfigError("give either density or cooperativity, not both");
  }
  if (density_given || lineshape == "table") c.target_cooperativity.reset();

  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto parent = std::filesystem::path(path).parent_path();
  return parse_config(ss.str(), parent.empty() ? "." : parent.string());
}

}  // namespace spinmem
