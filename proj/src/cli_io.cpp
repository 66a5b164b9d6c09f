#include "sgdyn/cli_io.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "sgdyn/errors.hpp"
#include "sgdyn/io.hpp"

namespace sgdyn {

namespace {

namespace fs = std::filesystem;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct BadValue {
  std::string message;
};

double to_double(const std::string& s) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(x))
    throw BadValue{"expected a number, got '" + s + "'"};
  return x;
}

template <class I>
I to_integer(const std::string& s) {
  I x = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size()) throw BadValue{"expected an integer, got '" + s + "'"};
  return x;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw BadValue{"expected true or false, got '" + s + "'"};
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split_list(s)) out.push_back(to_double(t));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunSpec&)> get;
  std::function<void(RunSpec&, const std::string&)> set;
};

Field dbl(const char* sec, const char* key, double RunSpec::*m) {
  return {sec, key, [m](const RunSpec& r) { return format_double(r.*m); },
          [m](RunSpec& r, const std::string& v) { r.*m = to_double(v); }};
}
Field integer(const char* sec, const char* key, int RunSpec::*m) {
  return {sec, key, [m](const RunSpec& r) { return std::to_string(r.*m); },
          [m](RunSpec& r, const std::string& v) { r.*m = to_integer<int>(v); }};
}
Field boolean(const char* sec, const char* key, bool RunSpec::*m) {
  return {sec, key, [m](const RunSpec& r) { return bool_str(r.*m); },
          [m](RunSpec& r, const std::string& v) { r.*m = to_bool(v); }};
}
Field str(const char* sec, const char* key, std::string RunSpec::*m) {
  return {sec, key, [m](const RunSpec& r) { return r.*m; }, [m](RunSpec& r, const std::string& v) { r.*m = v; }};
}
Field dlist(const char* sec, const char* key, std::vector<double> RunSpec::*m) {
  return {sec, key, [m](const RunSpec& r) { return join_doubles(r.*m); },
          [m](RunSpec& r, const std::string& v) { r.*m = to_doubles(v); }};
}
Field mat(const char* key, double MaterialParams::*m) {
  return {"material", key, [m](const RunSpec& r) { return format_double(r.material.*m); },
          [m](RunSpec& r, const std::string& v) { r.material.*m = to_double(v); }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(integer("mesh", "elements", &RunSpec::elements));
    f.push_back(boolean("mesh", "periodic", &RunSpec::periodic));

    f.push_back({"scheme", "kind", [](const RunSpec& r) { return to_string(r.scheme.kind); },
                 [](RunSpec& r, const std::string& v) {
                   try {
                     r.scheme.kind = parse_scheme_kind(v);
                   } catch (const InvalidParameter& e) {
                     throw BadValue{e.what()};
                   }
                 }});
    f.push_back({"scheme", "kappa_F_max", [](const RunSpec& r) { return std::to_string(r.scheme.kappa_F_max); },
                 [](RunSpec& r, const std::string& v) { r.scheme.kappa_F_max = to_integer<int>(v); }});
    f.push_back({"scheme", "kappa_gradF_max",
                 [](const RunSpec& r) { return std::to_string(r.scheme.kappa_gradF_max); },
                 [](RunSpec& r, const std::string& v) { r.scheme.kappa_gradF_max = to_integer<int>(v); }});
    f.push_back({"scheme", "l_gs", [](const RunSpec& r) { return format_double(r.scheme.l_gs); },
                 [](RunSpec& r, const std::string& v) { r.scheme.l_gs = to_double(v); }});

    f.push_back(dbl("time", "dt", &RunSpec::dt));
    f.push_back(dbl("time", "dt_coarse", &RunSpec::dt_coarse));
    f.push_back(dbl("time", "t_end", &RunSpec::t_end));
    f.push_back(dbl("time", "dissipation_threshold", &RunSpec::dissipation_threshold));
    f.push_back(boolean("time", "allow_dt_switch", &RunSpec::allow_dt_switch));
    f.push_back(boolean("time", "stop_at_steady_state", &RunSpec::stop_at_steady_state));
    f.push_back(integer("time", "steady_steps", &RunSpec::steady_steps));
    f.push_back(dbl("time", "steady_residual_tol", &RunSpec::steady_residual_tol));

    f.push_back(mat("B1", &MaterialParams::B1));
    f.push_back(mat("B2", &MaterialParams::B2));
    f.push_back(mat("B3", &MaterialParams::B3));
    f.push_back(mat("B4", &MaterialParams::B4));
    f.push_back(mat("B5", &MaterialParams::B5));
    f.push_back(mat("l", &MaterialParams::l));
    f.push_back(mat("rho", &MaterialParams::rho));
    f.push_back(mat("c", &MaterialParams::c));

    f.push_back(str("energy", "model", &RunSpec::energy));
    f.push_back(dbl("energy", "mu", &RunSpec::quadratic_mu));
    f.push_back(dbl("energy", "kappa", &RunSpec::quadratic_kappa));

    f.push_back({"newton", "residual_tol", [](const RunSpec& r) { return format_double(r.newton.residual_tol); },
                 [](RunSpec& r, const std::string& v) { r.newton.residual_tol = to_double(v); }});
    f.push_back({"newton", "max_iters", [](const RunSpec& r) { return std::to_string(r.newton.max_iters); },
                 [](RunSpec& r, const std::string& v) { r.newton.max_iters = to_integer<int>(v); }});
    f.push_back({"newton", "linear_solver", [](const RunSpec& r) { return to_string(r.newton.linear); },
                 [](RunSpec& r, const std::string& v) {
                   try {
                     r.newton.linear = parse_linear_solver(v);
                   } catch (const InvalidParameter& e) {
                     throw BadValue{e.what()};
                   }
                 }});
    f.push_back({"newton", "line_search", [](const RunSpec& r) { return bool_str(r.newton.line_search); },
                 [](RunSpec& r, const std::string& v) { r.newton.line_search = to_bool(v); }});

    f.push_back(str("initial", "kind", &RunSpec::initial));
    f.push_back(integer("initial", "ic_mesh", &RunSpec::ic_mesh));
    f.push_back({"initial", "index",
                 [](const RunSpec& r) { return fmt::format("{} {} {}", r.ic_index[0], r.ic_index[1], r.ic_index[2]); },
                 [](RunSpec& r, const std::string& v) {
                   const auto t = split_list(v);
                   if (t.size() != 3) throw BadValue{"expected three indices"};
                   for (int d = 0; d < 3; ++d) r.ic_index[d] = to_integer<int>(t[d]);
                 }});
    f.push_back(dbl("initial", "amplitude", &RunSpec::ic_amplitude));
    f.push_back(str("initial", "restart", &RunSpec::ic_restart));

    f.push_back(str("output", "directory", &RunSpec::output_dir));
    f.push_back(dlist("output", "snapshot_times", &RunSpec::snapshot_times));
    f.push_back(integer("output", "snapshot_lattice", &RunSpec::snapshot_lattice));
    f.push_back(boolean("output", "write_restart", &RunSpec::write_restart));
    f.push_back(boolean("output", "residual_log", &RunSpec::residual_log));

    f.push_back(integer("run", "threads", &RunSpec::threads));
    f.push_back({"run", "seed", [](const RunSpec& r) { return std::to_string(r.seed); },
                 [](RunSpec& r, const std::string& v) { r.seed = to_integer<std::uint64_t>(v); }});

    f.push_back(dlist("converge", "dts", &RunSpec::converge_dts));
    f.push_back(dbl("converge", "dt_reference", &RunSpec::converge_reference));

    f.push_back({"compare", "schemes",
                 [](const RunSpec& r) {
                   std::string s;
                   for (size_t i = 0; i < r.compare_schemes.size(); ++i) s += (i ? " " : "") + r.compare_schemes[i];
                   return s;
                 },
                 [](RunSpec& r, const std::string& v) { r.compare_schemes = split_list(v); }});
    f.push_back(dlist("compare", "dts", &RunSpec::compare_dts));

    f.push_back(dlist("homogenize", "eta_values", &RunSpec::eta_values));
    f.push_back(dbl("homogenize", "increment", &RunSpec::eta_increment));
    f.push_back(str("homogenize", "seed", &RunSpec::homogenize_seed));
    f.push_back(dbl("homogenize", "seed_amplitude", &RunSpec::seed_amplitude));
    return f;
  }();
  return fields;
}

// Line of `section.key` (or of the section header when key is empty) in the
// source text; 0 if absent.
int line_of(std::string_view text, const std::string& section, const std::string& key) {
  std::istringstream in{std::string(text)};
  std::string line, current;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      current = trim(std::string_view(t).substr(1, t.size() - 2));
      if (key.empty() && current == section) return n;
      continue;
    }
    const auto eq = t.find('=');
    if (current == section && eq != std::string::npos && trim(std::string_view(t).substr(0, eq)) == key) return n;
  }
  return 0;
}

std::string csv_header(const std::vector<std::string>& cols) {
  std::string s;
  for (size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  return s + "\n";
}

const std::vector<std::string> kEnergyHeader{"step", "t_half", "kinetic", "internal", "total", "dissipation",
                                             "newton_iters"};
const std::vector<std::string> kSnapshotHeader{"X1", "X2", "X3", "u1", "u2", "u3", "e2", "e3", "phase"};
const std::vector<std::string> kFieldHeader{"X1", "X2", "X3", "u1", "u2", "u3"};
const std::vector<std::string> kConvergenceHeader{"dt", "l2_error", "slope"};
const std::vector<std::string> kSweepHeader{"eta", "E11", "E22", "E33", "E23", "E13", "E12", "S11", "S22",
                                            "S33", "S23", "S13", "S12", "Psi_bar", "newton_iters"};
const std::vector<std::string> kResidualHeader{"step", "iter", "residual_norm"};

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

ConfigError field_error(const std::string& field, const std::string& msg) { return ConfigError(msg, 0, field); }

void apply_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

InitialCondition initial_condition(const RunSpec& spec, const SplineSpace& space) {
  if (spec.initial == "bump") {
    if (space.periodic()) throw field_error("initial.kind", "the bump initial condition needs an open mesh");
    return bump_initial_condition(space, BumpIC{spec.ic_mesh, spec.ic_index, spec.ic_amplitude});
  }
  InitialCondition ic;
  ic.u0 = FieldCoeffs::zeros(space);
  ic.v0 = FieldCoeffs::zeros(space);
  return ic;
}

FieldCoeffs laminate_seed(const SplineSpace& space, double a) {
  return interpolate_greville(space, [a](const Vec3& X) {
    const double s = a * std::sin(2.0 * M_PI * (X[0] + X[1]));
    return Vec3(s, -s, 0.0);
  });
}

std::string shortest(double x) { return fmt::format("{}", x); }

}  // namespace

void RunSpec::validate() const {
  if (elements < 1) throw field_error("mesh.elements", "elements must be at least 1");
  if (!(dt > 0.0)) throw field_error("time.dt", "dt must be positive");
  if (!(dt_coarse > 0.0)) throw field_error("time.dt_coarse", "dt_coarse must be positive");
  if (!(t_end >= 0.0)) throw field_error("time.t_end", "t_end must be non-negative");
  if (!(dissipation_threshold >= 0.0))
    throw field_error("time.dissipation_threshold", "dissipation_threshold must be non-negative");
  if (steady_steps < 1) throw field_error("time.steady_steps", "steady_steps must be at least 1");
  if (!(steady_residual_tol > 0.0))
    throw field_error("time.steady_residual_tol", "steady_residual_tol must be positive");
  try {
    scheme.validate();
  } catch (const InvalidParameter& e) {
    throw field_error("scheme", e.what());
  }
  try {
    material.validate();
  } catch (const InvalidParameter& e) {
    throw field_error("material", e.what());
  }
  if (material.c < 0.0) throw field_error("material.c", "damping must be non-negative");
  if (energy != "three_well" && energy != "quadratic")
    throw field_error("energy.model", "model must be three_well or quadratic");
  if (!(quadratic_mu > 0.0)) throw field_error("energy.mu", "mu must be positive");
  if (!(quadratic_kappa >= 0.0)) throw field_error("energy.kappa", "kappa must be non-negative");
  if (!(newton.residual_tol > 0.0)) throw field_error("newton.residual_tol", "residual_tol must be positive");
  if (newton.max_iters < 1) throw field_error("newton.max_iters", "max_iters must be at least 1");
  if (initial != "bump" && initial != "zero" && initial != "restart")
    throw field_error("initial.kind", "kind must be bump, zero or restart");
  if (ic_mesh < 1) throw field_error("initial.ic_mesh", "ic_mesh must be at least 1");
  for (int d = 0; d < 3; ++d)
    if (ic_index[d] < 1 || ic_index[d] > ic_mesh + 2)
      throw field_error("initial.index", fmt::format("index must lie in 1..{}", ic_mesh + 2));
  if (initial == "restart" && ic_restart.empty())
    throw field_error("initial.restart", "a restart file is required for kind = restart");
  if (output_dir.empty()) throw field_error("output.directory", "output directory must not be empty");
  for (double t : snapshot_times)
    if (!(t >= 0.0)) throw field_error("output.snapshot_times", "snapshot times must be non-negative");
  if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
    throw field_error("output.snapshot_times", "snapshot times must be increasing");
  if (snapshot_lattice < 2) throw field_error("output.snapshot_lattice", "snapshot_lattice must be at least 2");
  if (threads < 0) throw field_error("run.threads", "threads must be non-negative");
  for (double d : converge_dts)
    if (!(d > 0.0)) throw field_error("converge.dts", "time steps must be positive");
  if (!(converge_reference > 0.0)) throw field_error("converge.dt_reference", "dt_reference must be positive");
  for (const auto& s : compare_schemes) {
    try {
      parse_scheme_kind(s);
    } catch (const InvalidParameter& e) {
      throw field_error("compare.schemes", e.what());
    }
  }
  for (double d : compare_dts)
    if (!(d > 0.0)) throw field_error("compare.dts", "time steps must be positive");
  try {
    loading().validate();
  } catch (const InvalidParameter& e) {
    throw field_error("homogenize.eta_values", e.what());
  }
  if (homogenize_seed.empty()) throw field_error("homogenize.seed", "seed must be homogeneous, laminate or a restart file");
}

SplineSpace RunSpec::space() const { return SplineSpace::uniform(elements, periodic); }

RunConfig RunSpec::run_config() const {
  RunConfig c;
  c.dt = dt;
  c.dt_coarse = dt_coarse;
  c.dissipation_switch_threshold = dissipation_threshold;
  c.allow_dt_switch = allow_dt_switch;
  c.t_end = t_end;
  c.stop_at_steady_state = stop_at_steady_state;
  c.steady_steps = steady_steps;
  c.steady_residual_tol = steady_residual_tol;
  c.scheme = scheme;
  c.newton = newton;
  c.snapshot_times = snapshot_times;
  c.snapshot_lattice = snapshot_lattice;
  c.threads = threads;
  return c;
}

EnergyModel RunSpec::energy_model() const {
  if (energy == "quadratic") return QuadraticEnergy::isotropic(quadratic_mu, quadratic_kappa);
  return ThreeWellEnergy(material);
}

MacroLoading RunSpec::loading() const {
  MacroLoading l;
  l.eta_values = eta_values;
  l.increment = eta_increment;
  return l;
}

RunSpec parse_run_spec(std::string_view text) {
  namespace pt = boost::property_tree;
  // The INI reader only knows ';' comments.
  std::string src;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      const auto b = line.find_first_not_of(" \t");
      if (b != std::string::npos && line[b] == '#') line[b] = ';';
      src += line + "\n";
    }
  }
  pt::ptree tree;
  try {
    std::istringstream in(src);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("malformed spec: " + e.message(), static_cast<int>(e.line()));
  }

  std::map<std::string, std::map<std::string, const Field*>> index;
  for (const auto& f : schema()) index[f.section][f.key] = &f;

  RunSpec spec;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("key '" + section + "' outside any section", line_of(text, "", section), section);
    const auto sec = index.find(section);
    if (sec == index.end())
      throw ConfigError("unknown section [" + section + "]", line_of(text, section, ""), section);
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      const auto it = sec->second.find(key);
      if (it == sec->second.end())
        throw ConfigError("unknown key '" + name + "'", line_of(text, section, key), name);
      try {
        it->second->set(spec, trim(node.data()));
      } catch (const BadValue& e) {
        throw ConfigError(name + ": " + e.message, line_of(text, section, key), name);
      }
    }
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    const std::string& f = e.field();
    const auto dot = f.find('.');
    const int line = dot == std::string::npos ? line_of(text, f, "")
                                              : line_of(text, f.substr(0, dot), f.substr(dot + 1));
    throw ConfigError(e.what(), line, f);
  }
  return spec;
}

RunSpec load_run_spec(const std::string& path) { return parse_run_spec(read_file(path)); }

std::string serialize_run_spec(const RunSpec& spec) {
  std::string out;
  std::string section;
  for (const auto& f : schema()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "" : "\n") + fmt::format("[{}]\n", section);
    }
    out += fmt::format("{} = {}\n", f.key, f.get(spec));
  }
  return out;
}

std::string resolve_output_dir(const std::string& dir) {
  const fs::path p(dir);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("SGDYN_OUTPUT_ROOT"); root && *root) return (fs::path(root) / p).string();
  return p.string();
}

std::string energy_csv(const EnergyLedger& ledger) {
  std::string s = fmt::format("# initial kinetic={} internal={} total={}\n", format_double(ledger.initial_kinetic),
                              format_double(ledger.initial_internal), format_double(ledger.initial_total));
  s += csv_header(kEnergyHeader);
  for (const auto& r : ledger.records)
    s += fmt::format("{},{},{},{},{},{},{}\n", r.step, format_double(r.t_half), format_double(r.kinetic),
                     format_double(r.internal), format_double(r.total), format_double(r.dissipation),
                     r.newton_iters);
  return s;
}

std::string residual_csv(const EnergyLedger& ledger) {
  std::string s = csv_header(kResidualHeader);
  for (const auto& r : ledger.records)
    for (size_t i = 0; i < r.residual_history.size(); ++i)
      s += fmt::format("{},{},{}\n", r.step, i, format_double(r.residual_history[i]));
  return s;
}

std::string snapshot_csv(const Snapshot& snap) {
  std::string s = fmt::format("# time={} t_half={} step={}\n", format_double(snap.time), format_double(snap.t_half),
                              snap.step);
  s += csv_header(kSnapshotHeader);
  for (const auto& r : snap.rows)
    s += fmt::format("{},{},{},{},{},{},{},{},{}\n", format_double(r.X[0]), format_double(r.X[1]),
                     format_double(r.X[2]), format_double(r.u[0]), format_double(r.u[1]), format_double(r.u[2]),
                     format_double(r.e2), format_double(r.e3), phase_label(r.phase));
  return s;
}

std::string field_csv(const SplineSpace& space, const FieldCoeffs& u, int lattice) {
  if (lattice < 2) throw InvalidParameter("lattice needs at least two points per axis");
  std::string s = csv_header(kFieldHeader);
  const double h = 1.0 / (lattice - 1);
  for (int i = 0; i < lattice; ++i)
    for (int j = 0; j < lattice; ++j)
      for (int k = 0; k < lattice; ++k) {
        const Vec3 X(i * h, j * h, k * h);
        const Vec3 v = interpolate_field(space, u, X).u;
        s += fmt::format("{},{},{},{},{},{}\n", format_double(X[0]), format_double(X[1]), format_double(X[2]),
                         format_double(v[0]), format_double(v[1]), format_double(v[2]));
      }
  return s;
}

std::string convergence_csv(const ConvergenceTable& t) {
  std::string s = csv_header(kConvergenceHeader);
  const std::string slope = std::isfinite(t.slope) ? format_double(t.slope) : "nan";
  for (const auto& r : t.rows)
    s += fmt::format("{},{},{}\n", format_double(r.dt), r.converged ? format_double(r.l2_error) : "DNF", slope);
  return s;
}

std::string sweep_csv(const EffectiveResponse& r) {
  std::string s = "# D = [";
  for (int i = 0; i < 3; ++i)
    s += fmt::format("{}[{}, {}, {}]", i ? ", " : "", shortest(r.D(i, 0)), shortest(r.D(i, 1)), shortest(r.D(i, 2)));
  s += "]\n# Fbar = I + eta D\n";
  for (const auto& f : r.failures) s += "# failed: " + f + "\n";
  s += csv_header(kSweepHeader);
  auto voigt = [](const Mat3& m) {
    return std::array<double, 6>{m(0, 0), m(1, 1), m(2, 2), m(1, 2), m(0, 2), m(0, 1)};
  };
  for (const auto& rec : r.records) {
    s += format_double(rec.eta);
    for (double x : voigt(rec.Ebar)) s += "," + format_double(x);
    for (double x : voigt(rec.Sbar)) s += "," + format_double(x);
    s += fmt::format(",{},{}\n", format_double(rec.psi_bar), rec.newton_iters);
  }
  return s;
}

std::string histogram_csv(const std::vector<HistogramColumn>& cols) {
  std::string s = "iterations";
  int lo = std::numeric_limits<int>::max(), hi = -1;
  for (const auto& c : cols) {
    s += fmt::format(",{}@{}", c.scheme, shortest(c.dt));
    for (int n : c.iterations) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
  }
  s += "\n";
  for (int n = lo; n <= hi; ++n) {
    s += std::to_string(n);
    for (const auto& c : cols) s += fmt::format(",{}", std::count(c.iterations.begin(), c.iterations.end(), n));
    s += "\n";
  }
  s += "status";
  for (const auto& c : cols) s += c.failed ? fmt::format(",DNF@step{}", c.failed_step) : std::string(",ok");
  return s + "\n";
}

CsvTable parse_csv(std::string_view text, const std::vector<std::string>& expected_header) {
  if (text.empty() || text.back() != '\n') throw IoError("truncated CSV: missing final newline");
  CsvTable t;
  size_t pos = 0;
  int lineno = 0;
  bool have_header = false;
  while (pos < text.size()) {
    const size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!have_header && !line.empty() && line[0] == '#') {
      t.comments.push_back(trim(line.substr(1)));
      continue;
    }
    std::vector<std::string> cells;
    size_t b = 0;
    while (true) {
      const size_t c = line.find(',', b);
      cells.push_back(std::string(line.substr(b, c == std::string_view::npos ? std::string_view::npos : c - b)));
      if (c == std::string_view::npos) break;
      b = c + 1;
    }
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      if (!expected_header.empty() && t.header != expected_header)
        throw IoError(fmt::format("unexpected CSV header on line {}", lineno));
      continue;
    }
    if (cells.size() != t.header.size())
      throw IoError(fmt::format("CSV line {} has {} cells, expected {}", lineno, cells.size(), t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw IoError("CSV without header");
  return t;
}

CsvTable read_csv(const std::string& path, const std::vector<std::string>& expected_header) {
  try {
    return parse_csv(read_file(path), expected_header);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

int cmd_run(const RunSpec& spec, std::ostream& out) {
  spec.validate();
  const SplineSpace space = spec.space();
  const RunConfig cfg = spec.run_config();
  cfg.validate();
  std::optional<StatePair> restored;
  InitialCondition ic;
  if (spec.initial == "restart") {
    bool periodic = false;
    restored = read_restart(spec.ic_restart, &periodic);
    if (restored->curr.dims != space.dof_dims() || periodic != spec.periodic)
      throw field_error("initial.restart", "restart file does not match the mesh");
  } else {
    ic = initial_condition(spec, space);
  }
  apply_threads(spec.threads);

  const std::string dir = resolve_output_dir(spec.output_dir);
  atomic_write(join_path(dir, "run_spec.ini"), serialize_run_spec(spec));

  Simulator sim(space, spec.material, cfg, spec.energy_model());
  if (restored)
    sim.restore(*restored);
  else
    sim.start(ic);

  size_t written_snapshots = 0;
  auto flush = [&] {
    atomic_write(join_path(dir, "energy.csv"), energy_csv(sim.ledger()));
    if (spec.residual_log) atomic_write(join_path(dir, "residuals.csv"), residual_csv(sim.ledger()));
    for (; written_snapshots < sim.snapshots().size(); ++written_snapshots) {
      const Snapshot& s = sim.snapshots()[written_snapshots];
      atomic_write(join_path(dir, fmt::format("snapshot_t{}.csv", shortest(s.time))), snapshot_csv(s));
    }
  };

  fmt::print(out, "run: {}^3 {} mesh, {} scheme, dt={}, t_end={}, c={}, {} free dofs\n", spec.elements,
             spec.periodic ? "periodic" : "open", to_string(spec.scheme.kind), shortest(spec.dt),
             shortest(spec.t_end), shortest(spec.material.c), sim.assembler().dofs().num_free());
  double bound = 0.0, worst_ratio = 0.0;
  try {
    sim.run([&](const LedgerRecord& r) {
      bound += r.balance_tol * r.dt;
      if (r.balance_tol > 0.0) worst_ratio = std::max(worst_ratio, std::abs(r.balance_error) / r.balance_tol);
      if (r.step % 10 == 0) {
        flush();
        fmt::print(out, "  step {:6d}  t={:.6f}  dt={:.3g}  total={:.10e}  iters={}\n", r.step, r.t_half, r.dt,
                   r.total, r.newton_iters);
      }
    });
  } catch (const NonConvergence&) {
    flush();
    if (spec.write_restart) write_restart(join_path(dir, "restart.bin"), sim.state(), spec.periodic);
    throw;
  }
  flush();
  if (spec.write_restart) write_restart(join_path(dir, "restart.bin"), sim.state(), spec.periodic);
  atomic_write(join_path(dir, "field_final.csv"), field_csv(space, sim.state().midpoint(), spec.snapshot_lattice));

  const EnergyLedger& L = sim.ledger();
  const double final_total = L.records.empty() ? L.initial_total : L.records.back().total;
  double dissipated = 0.0;
  for (const auto& r : L.records) dissipated += r.dissipation;
  const double drift = final_total - L.initial_total;
  fmt::print(out, "summary: {} steps, t={}, steady={}\n", L.records.size(), format_double(sim.state().t_half),
             sim.steady() ? "yes" : "no");
  fmt::print(out, "energy: initial={} final={} dissipated={}\n", format_double(L.initial_total),
             format_double(final_total), format_double(dissipated));
  fmt::print(out, "balance: worst |error|/tol = {:.3g}\n", worst_ratio);
  if (spec.material.c == 0.0) {
    const bool ok = std::abs(drift) <= bound;
    fmt::print(out, "conservation: |final - initial| = {:.3e} <= bound {:.3e}: {}\n", std::abs(drift), bound,
               ok ? "ok" : "VIOLATED");
    if (!ok) return kExitFailure;
  } else {
    const double gap = drift + dissipated;
    fmt::print(out, "dissipation balance: final - initial + dissipated = {:.3e} (bound {:.3e})\n", gap, bound);
  }
  return kExitOk;
}

int cmd_converge(const RunSpec& spec, std::ostream& out) {
  spec.validate();
  if (spec.converge_dts.size() < 3) throw field_error("converge.dts", "the study needs at least three time steps");
  const SplineSpace space = spec.space();
  const InitialCondition ic = initial_condition(spec, space);
  apply_threads(spec.threads);
  RunConfig base = spec.run_config();
  base.snapshot_times.clear();
  ConvergenceTable t;
  try {
    t = temporal_convergence_study(space, spec.material, ic, base, spec.converge_dts, spec.converge_reference);
  } catch (const InvalidParameter& e) {
    throw field_error("converge.dts", e.what());
  }
  const std::string dir = resolve_output_dir(spec.output_dir);
  atomic_write(join_path(dir, "convergence.csv"), convergence_csv(t));
  bool failed = false;
  for (const auto& r : t.rows) {
    if (r.converged)
      fmt::print(out, "  dt={:<10} l2_error={:.6e}\n", shortest(r.dt), r.l2_error);
    else
      fmt::print(out, "  dt={:<10} DNF ({})\n", shortest(r.dt), r.failure);
    failed = failed || !r.converged;
  }
  fmt::print(out, "{}: slope {:.4f}\n", to_string(spec.scheme.kind), t.slope);
  return failed ? kExitSolver : kExitOk;
}

int cmd_compare(const RunSpec& spec, std::ostream& out) {
  spec.validate();
  const SplineSpace space = spec.space();
  const InitialCondition ic = initial_condition(spec, space);
  apply_threads(spec.threads);
  std::vector<HistogramColumn> cols;
  for (const auto& name : spec.compare_schemes) {
    SchemeConfig sc = spec.scheme;
    sc.kind = parse_scheme_kind(name);
    if (sc.kind == SchemeKind::TaylorReduced && spec.scheme.kind != SchemeKind::TaylorReduced)
      sc = SchemeConfig::taylor_reduced();
    if (sc.kind == SchemeKind::TaylorFull) sc = SchemeConfig::taylor_full();
    for (double dt : spec.compare_dts) {
      HistogramColumn col{name, dt, {}, false, 0};
      RunConfig cfg = spec.run_config();
      cfg.scheme = sc;
      cfg.dt = dt;
      cfg.dt_coarse = std::max(cfg.dt_coarse, dt);
      cfg.allow_dt_switch = false;
      cfg.stop_at_steady_state = false;
      cfg.snapshot_times.clear();
      const long steps = static_cast<long>(std::floor(spec.t_end / dt + 1e-9));
      Simulator sim(space, spec.material, cfg, spec.energy_model());
      sim.start(ic);
      try {
        for (long k = 0; k < steps; ++k) col.iterations.push_back(sim.step().newton_iters);
      } catch (const NonConvergence& e) {
        col.failed = true;
        col.failed_step = static_cast<long>(col.iterations.size()) + 1;
        fmt::print(out, "  {} dt={}: {}\n", name, shortest(dt), e.what());
      }
      fmt::print(out, "  {} dt={}: {} steps{}\n", name, shortest(dt), col.iterations.size(),
                 col.failed ? " (DNF)" : "");
      cols.push_back(std::move(col));
    }
  }
  const std::string dir = resolve_output_dir(spec.output_dir);
  atomic_write(join_path(dir, "compare.csv"), histogram_csv(cols));
  return kExitOk;
}

int cmd_homogenize(const RunSpec& spec, std::ostream& out) {
  spec.validate();
  if (!spec.periodic) throw field_error("mesh.periodic", "homogenization needs a periodic mesh");
  const SplineSpace space = spec.space();
  FieldCoeffs seed;
  if (spec.homogenize_seed == "homogeneous") {
    seed = FieldCoeffs::zeros(space);
  } else if (spec.homogenize_seed == "laminate") {
    seed = laminate_seed(space, spec.seed_amplitude);
  } else {
    if (!fs::exists(spec.homogenize_seed))
      throw field_error("homogenize.seed", "seed restart file not found: " + spec.homogenize_seed);
    bool periodic = false;
    const StatePair s = read_restart(spec.homogenize_seed, &periodic);
    const int n = periodic ? s.curr.dims[0] : s.curr.dims[0] - KnotVector::kDegree;
    if (n < 1 || s.curr.dims[1] != s.curr.dims[0] || s.curr.dims[2] != s.curr.dims[0])
      throw field_error("homogenize.seed", "seed restart file has an unsupported mesh");
    const SplineSpace from = SplineSpace::uniform(n, periodic);
    seed = from.dof_dims() == space.dof_dims() && periodic ? s.midpoint() : transfer(from, s.midpoint(), space);
  }
  apply_threads(spec.threads);
  const MacroLoading loading = spec.loading();
  fmt::print(out, "homogenize: {}^3 periodic cell, seed {}, {} eta values\n", spec.elements, spec.homogenize_seed,
             loading.eta_values.size());
  const EffectiveResponse r = continuation_sweep(space, loading, spec.energy_model(), seed, spec.newton);
  const std::string dir = resolve_output_dir(spec.output_dir);
  atomic_write(join_path(dir, "sweep.csv"), sweep_csv(r));
  for (const auto& line : r.records)
    fmt::print(out, "  eta={:<8} psi_bar={:.6e}  iters={}  symmetry={:.1e} {}  routes={:.1e}\n", shortest(line.eta),
               line.psi_bar, line.newton_iters, line.symmetry_error, line.symmetry_error <= 1e-8 ? "pass" : "FAIL",
               line.route_error);
  for (const auto& f : r.failures) fmt::print(out, "  failed: {}\n", f);
  return r.failures.empty() ? kExitOk : kExitSolver;
}

int cmd_check(const RunSpec& spec, std::ostream& out) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const EnergyModel energy = spec.energy_model();
  bool all_ok = true;
  auto report = [&](const std::string& name, double worst, double tol) {
    const bool ok = worst <= tol;
    all_ok = all_ok && ok;
    fmt::print(out, "{:<44} worst {:.3e}  tol {:.1e}  {}\n", name, worst, tol, ok ? "PASS" : "FAIL");
  };
  auto random_state = [&](double scale) {
    QuadState q = QuadState::identity();
    for (int v = 0; v < kNumF; ++v) q.z[v] += 0.1 * scale * gauss(rng);
    for (int v = kNumF; v < kNumZeta; ++v) q.z[v] += 0.5 * scale * gauss(rng);
    return q;
  };

  const int pairs = 200;
  for (const auto& sc : {SchemeConfig::gonzalez(spec.scheme.l_gs), SchemeConfig::taylor_full()}) {
    double worst = 0.0;
    for (int k = 0; k < pairs; ++k) {
      HalfStepStates h{random_state(1.0), random_state(1.0)};
      const double dpsi = energy_psi(energy, h.plus) - energy_psi(energy, h.minus);
      const StressPair s = scheme_stresses(h, energy, sc);
      const double scale = std::max({1.0, std::abs(energy_psi(energy, h.plus)), std::abs(energy_psi(energy, h.minus))});
      worst = std::max(worst, std::abs(dot(s.s, h.delta()) - dpsi) / scale);
    }
    report("discrete gradient identity (" + to_string(sc.kind) + ")", worst, 1e-10);
  }

  {
    double worst = 0.0;
    for (int k = 0; k < pairs / 4; ++k) {
      const QuadState q = random_state(1.0);
      const StressPair s = energy_stresses(energy, q);
      for (int v = 0; v < kNumZeta; ++v) {
        const double h = 1e-6 * std::max(1.0, std::abs(q.z[v]));
        QuadState a = q, b = q;
        a.z[v] += h;
        b.z[v] -= h;
        const double fd = (energy_psi(energy, a) - energy_psi(energy, b)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - s.s[v]) / std::max(1.0, std::abs(s.s[v])));
      }
    }
    report("stress vs central difference of Psi", worst, 1e-5);
  }

  if (spec.energy == "three_well") {
    double worst = std::abs(energy_psi(energy, QuadState::identity()));
    for (const auto& w : well_points(spec.material)) {
      const double e2 = w[0], e3 = w[1];
      const double E11 = e2 / std::sqrt(2.0) + e3 / std::sqrt(6.0);
      const double E22 = -e2 / std::sqrt(2.0) + e3 / std::sqrt(6.0);
      const double E33 = -2.0 * e3 / std::sqrt(6.0);
      QuadState q = QuadState::identity();
      q.F(0, 0) = std::sqrt(1.0 + 2.0 * E11);
      q.F(1, 1) = std::sqrt(1.0 + 2.0 * E22);
      q.F(2, 2) = std::sqrt(1.0 + 2.0 * E33);
      worst = std::max(worst, std::abs(energy_psi(energy, q) + 1.0));
    }
    report("Psi(I) = 0 and Psi = -1 at the three wells", worst, 1e-10);
  }

  {
    const SplineSpace s = spec.space();
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
      const Vec3 X(unit(rng), unit(rng), unit(rng));
      double sum = 0.0;
      Vec3 grad = Vec3::Zero();
      for (const auto& b : s.eval_basis(X)) {
        sum += b.value;
        for (int d = 0; d < 3; ++d) grad[d] += b.grad[d];
      }
      worst = std::max({worst, std::abs(sum - 1.0), grad.cwiseAbs().maxCoeff()});
    }
    report("spline partition of unity", worst, 1e-12);
  }

  fmt::print(out, "check: {}\n", all_ok ? "all passed" : "FAILED");
  return all_ok ? kExitOk : kExitFailure;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidParameter*>(&e) ||
      dynamic_cast<const InvalidMesh*>(&e) || dynamic_cast<const RefinementError*>(&e))
    return kExitUsage;
  if (dynamic_cast<const NonConvergence*>(&e) || dynamic_cast<const LinearSolverError*>(&e) ||
      dynamic_cast<const AssemblyError*>(&e) || dynamic_cast<const DomainError*>(&e))
    return kExitSolver;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  return kExitFailure;
}

void report_error(const std::exception& e, std::ostream& err) {
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    std::string where;
    if (c->line() > 0) where = fmt::format("line {}", c->line());
    if (!c->field().empty()) where += (where.empty() ? "" : ", ") + c->field();
    fmt::print(err, "error: invalid spec{}: {}\n", where.empty() ? "" : " (" + where + ")", c->what());
    return;
  }
  if (const auto* n = dynamic_cast<const NonConvergence*>(&e)) {
    fmt::print(err, "error: solver failed: {} (after {} iterations, residual {:.3e})\n", n->what(), n->iterations(),
               n->residual_norm());
    return;
  }
  fmt::print(err, "error: {}\n", e.what());
}

}  // namespace sgdyn
