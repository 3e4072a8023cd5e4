#include "config.h"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "relaxmpc/errors.h"

namespace relaxmpc {
namespace cli {

using Eigen::VectorXd;
namespace fm = formulation;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  const char* begin = v.c_str();
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(begin, &end);
  if (v.empty() || end != begin + v.size() || errno == ERANGE ||
      !std::isfinite(d)) {
    throw ConfigError(key + ": not a finite number: '" + v + "'");
  }
  return d;
}

long long to_integer(const std::string& key, const std::string& v) {
  const char* begin = v.c_str();
  char* end = nullptr;
  errno = 0;
  const long long i = std::strtoll(begin, &end, 10);
  if (v.empty() || end != begin + v.size() || errno == ERANGE) {
    throw ConfigError(key + ": not an integer: '" + v + "'");
  }
  return i;
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    out.push_back(to_double(key, trim(item)));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

VectorXd to_vector(const std::string& key, const std::string& v) {
  const std::vector<double> l = to_list(key, v);
  return Eigen::Map<const VectorXd>(l.data(), static_cast<int>(l.size()));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

std::string fmt_list(const double* d, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? ", " : "") + fmt(d[i]);
  return s;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)>
      set;
  /// Empty optional: the key is omitted from the canonical text.
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

using Table = std::vector<std::pair<std::string, Field>>;

Field text_field(std::string ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string&, const std::string& v) {
            c.*m = v;
          },
          [m](const ExperimentConfig& c) { return std::optional(c.*m); }};
}

Field real_field(double ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*m = to_double(k, v);
          },
          [m](const ExperimentConfig& c) { return std::optional(fmt(c.*m)); }};
}

Field optional_real_field(std::optional<double> ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*m = to_double(k, v);
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!(c.*m)) return std::nullopt;
            return fmt(*(c.*m));
          }};
}

Field int_field(int ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
            const long long i = to_integer(k, v);
            if (i < INT32_MIN || i > INT32_MAX) throw ConfigError(k + ": out of range");
            c.*m = static_cast<int>(i);
          },
          [m](const ExperimentConfig& c) {
            return std::optional(std::to_string(c.*m));
          }};
}

Field optional_vector_field(std::optional<VectorXd> ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*m = to_vector(k, v);
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!(c.*m)) return std::nullopt;
            return fmt_list((c.*m)->data(), static_cast<int>((c.*m)->size()));
          }};
}

Field tank_field(bool pump, int i) {
  return {[pump, i](ExperimentConfig& c, const std::string& k,
                    const std::string& v) {
            (pump ? c.tank.cu : c.tank.c)[i] = to_double(k, v);
          },
          [pump, i](const ExperimentConfig& c) {
            return std::optional(fmt((pump ? c.tank.cu : c.tank.c)[i]));
          }};
}

const Table& table() {
  static const Table t = [] {
    Table t;
    t.emplace_back("model.kind", text_field(&ExperimentConfig::model));
    t.emplace_back("model.dt_s", real_field(&ExperimentConfig::dt_s));
    t.emplace_back("model.discretization",
                   text_field(&ExperimentConfig::discretization));
    t.emplace_back("model.theta_rad", real_field(&ExperimentConfig::theta_rad));
    for (int i = 0; i < 4; ++i) {
      t.emplace_back("model.outlet_c" + std::to_string(i + 1), tank_field(false, i));
    }
    for (int i = 0; i < 4; ++i) {
      t.emplace_back("model.pump_c" + std::to_string(i + 1), tank_field(true, i));
    }
    t.emplace_back("controller.formulation",
                   text_field(&ExperimentConfig::formulation));
    t.emplace_back("controller.horizon", int_field(&ExperimentConfig::horizon));
    t.emplace_back("controller.lambda",
                   optional_real_field(&ExperimentConfig::lambda));
    t.emplace_back("controller.q_xi", optional_real_field(&ExperimentConfig::q_xi));
    t.emplace_back("controller.delta", real_field(&ExperimentConfig::delta));
    t.emplace_back("controller.implicit_steps",
                   int_field(&ExperimentConfig::implicit_steps));
    t.emplace_back("controller.tail_steps", int_field(&ExperimentConfig::tail_steps));
    t.emplace_back("controller.sublevel_cap",
                   optional_real_field(&ExperimentConfig::sublevel_cap));
    t.emplace_back("initial.x0", optional_vector_field(&ExperimentConfig::x0));
    t.emplace_back("initial.ray", optional_vector_field(&ExperimentConfig::ray));
    t.emplace_back(
        "initial.scales",
        Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.scales = to_list(k, v);
              },
              [](const ExperimentConfig& c) -> std::optional<std::string> {
                if (c.scales.empty()) return std::nullopt;
                return fmt_list(c.scales.data(), static_cast<int>(c.scales.size()));
              }});
    t.emplace_back("disturbance.kind", text_field(&ExperimentConfig::disturbance));
    t.emplace_back("disturbance.radius", real_field(&ExperimentConfig::radius));
    t.emplace_back("disturbance.peak_winf", real_field(&ExperimentConfig::peak_winf));
    t.emplace_back(
        "disturbance.seed",
        Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                const long long i = to_integer(k, v);
                if (i < 0) throw ConfigError(k + ": must be nonnegative");
                c.seed = static_cast<std::uint64_t>(i);
              },
              [](const ExperimentConfig& c) {
                return std::optional(std::to_string(c.seed));
              }});
    t.emplace_back("run.steps", int_field(&ExperimentConfig::steps));
    t.emplace_back("run.out_dir", text_field(&ExperimentConfig::out_dir));
    t.emplace_back(
        "run.timing",
        Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.timing = to_bool(k, v);
              },
              [](const ExperimentConfig& c) {
                return std::optional(std::string(c.timing ? "true" : "false"));
              }});
    return t;
  }();
  return t;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : table()) {
    if (k == key) return &f;
  }
  return nullptr;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> sections = {
          "model", "controller", "initial", "disturbance", "run"};
      if (!sections.count(section)) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    f->set(c, key, value);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out, section;
  for (const auto& [key, f] : table()) {
    const std::optional<std::string> v = f.get(config);
    if (!v) continue;
    const std::string s = key.substr(0, key.find('.'));
    if (s != section) {
      out += (out.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += key.substr(key.find('.') + 1) + " = " + *v + "\n";
  }
  return out;
}

Formulation make_formulation(const ExperimentConfig& c, double default_lambda,
                             double default_q_xi) {
  const double lambda = c.lambda.value_or(default_lambda);
  const double q_xi = c.q_xi.value_or(default_q_xi);
  const std::string& f = c.formulation;
  if (f == "nominal") return fm::Nominal{};
  if (f == "slack_init") return fm::SlackInit{lambda};
  if (f == "implicit") return fm::ImplicitSlack{lambda, c.implicit_steps};
  if (f == "implicit_soft_input") {
    return fm::ImplicitSlackSoftInput{lambda, c.implicit_steps};
  }
  if (f == "tube") return fm::Tube{c.delta, std::nullopt};
  if (f == "tube_slack") return fm::TubeSlack{c.delta, lambda, std::nullopt};
  if (f == "soft_p") return fm::SoftP{q_xi};
  if (f == "soft_t") return fm::SoftT{q_xi, c.tail_steps, std::nullopt};
  if (f == "soft_g") return fm::SoftG{q_xi};
  throw ConfigError("controller.formulation: unknown variant '" + f + "'");
}

namespace {

DisturbanceProfile make_disturbance(const ExperimentConfig& c) {
  DisturbanceProfile d;
  if (c.disturbance == "zero") {
    d = DisturbanceProfile::zero();
  } else if (c.disturbance == "ball") {
    d = DisturbanceProfile::uniform_ball(c.radius, c.seed);
  } else if (c.disturbance == "ramp") {
    d = DisturbanceProfile::ramp(c.peak_winf, c.seed);
  } else {
    throw ConfigError("disturbance.kind: unknown profile '" + c.disturbance + "'");
  }
  try {
    d.validate();
  } catch (const IllFormed& e) {
    throw ConfigError(std::string("disturbance: ") + e.what());
  }
  return d;
}

void validate_spec(const OcpSpec& spec) {
  try {
    spec.validate();
  } catch (const DimensionMismatch& e) {
    throw ConfigError(e.what());
  } catch (const IllFormed& e) {
    throw ConfigError(e.what());
  } catch (const MissingLyap& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

Experiment make_experiment(const ExperimentConfig& c) {
  if (c.horizon < 1) throw ConfigError("controller.horizon must be >= 1");
  if (c.steps < 1) throw ConfigError("run.steps must be >= 1");
  if (c.sublevel_cap && !(*c.sublevel_cap > 0.0)) {
    throw ConfigError("controller.sublevel_cap must be positive");
  }
  Experiment e;
  e.steps = c.steps;
  e.disturbance = make_disturbance(c);
  std::optional<VectorXd> default_x0;
  if (c.model == "mass_spring_damper" || c.model == "harmonic_oscillator") {
    LinearBenchmark b;
    if (c.model == "mass_spring_damper") {
      if (!(c.dt_s > 0.0)) throw ConfigError("model.dt_s must be positive");
      Discretization method;
      if (c.discretization == "zoh") {
        method = Discretization::ZeroOrderHold;
      } else if (c.discretization == "euler") {
        method = Discretization::ForwardEuler;
      } else {
        throw ConfigError("model.discretization: expected zoh or euler");
      }
      b = msd_benchmark(method, c.dt_s);
    } else {
      if (!(c.theta_rad > 0.0 && c.theta_rad < M_PI)) {
        throw ConfigError("model.theta_rad must lie in (0, pi)");
      }
      b = harmonic_benchmark(c.theta_rad);
    }
    b.N = c.horizon;
    const Formulation f = make_formulation(c, b.lambda, b.q_xi);
    if (std::holds_alternative<fm::SoftG>(f) && b.P_g.size() == 0) {
      throw ConfigError("soft_g needs a Schur-stable model");
    }
    e.spec = b.spec(f);
  } else if (c.model == "four_tank") {
    for (int i = 0; i < 4; ++i) {
      if (!(c.tank.c[i] > 0.0) || !(c.tank.cu[i] > 0.0)) {
        throw ConfigError("four-tank constants must be positive");
      }
    }
    FourTankBenchmark b = four_tank_benchmark(c.tank);
    b.N = c.horizon;
    e.spec = b.spec(make_formulation(c, b.lambda, b.q_xi));
    default_x0 = b.x0;
  } else {
    throw ConfigError("model.kind: unknown model '" + c.model + "'");
  }
  e.spec.sublevel_cap = c.sublevel_cap;
  validate_spec(e.spec);

  const int n = e.spec.n();
  if (c.x0 && (c.ray || !c.scales.empty())) {
    throw ConfigError("initial: give either x0 or ray with scales, not both");
  }
  if (c.x0) {
    e.initial_states.push_back(*c.x0);
  } else if (c.ray) {
    if (c.scales.empty()) throw ConfigError("initial.ray needs initial.scales");
    for (double s : c.scales) e.initial_states.push_back(s * *c.ray);
  } else if (!c.scales.empty()) {
    throw ConfigError("initial.scales needs initial.ray");
  } else if (default_x0) {
    e.initial_states.push_back(*default_x0);
  } else {
    throw ConfigError("initial: x0 or ray with scales is required for this model");
  }
  for (const VectorXd& x : e.initial_states) {
    if (x.size() != n) {
      throw ConfigError("initial state has dimension " + std::to_string(x.size()) +
                        ", model has " + std::to_string(n));
    }
  }
  return e;
}

}  // namespace cli
}  // namespace relaxmpc
