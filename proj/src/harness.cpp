#include "cpch/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace cpch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v))
    throw ConfigError(key, "expected a real number, got '" + text + "'");
  return v;
}

long long to_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

int parse_scheme(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "bdf1" || t == "1") return 1;
  if (t == "bdf2" || t == "2") return 2;
  throw ConfigError(key, "expected bdf1 or bdf2, got '" + text + "'");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  // shortest text that reads back to the same double
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "experiment",
      "surface",     "radius",        "R",          "r",           "N",         "domain_lower",
      "domain_upper", "Cn",           "Pe",         "potential",   "scheme",    "dt",
      "dt_max",      "t_end",         "ic",         "ic_value",    "ic_l",      "ic_m",
      "seed",        "ic_coarse_N",   "rtol",       "max_iter",    "conserve",  "schur",
      "output_dir",  "snapshot_times", "write_vtk", "dump_band",   "export_matrices",
      "grids",       "dt_list",       "schemes",    "reference",   "reference_factor",
      "reference_N", "reference_dt"};
  return keys;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  return os;
}

}  // namespace

Experiment parse_experiment(const std::string& name) {
  if (name == "single-run") return Experiment::kSingleRun;
  if (name == "time-convergence") return Experiment::kTimeConvergence;
  if (name == "grid-convergence") return Experiment::kGridConvergence;
  if (name == "torus") return Experiment::kTorus;
  throw Error(ErrorCode::kInvalidArgument, "unknown experiment '" + name + "'");
}

std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::kSingleRun: return "single-run";
    case Experiment::kTimeConvergence: return "time-convergence";
    case Experiment::kGridConvergence: return "grid-convergence";
    case Experiment::kTorus: return "torus";
  }
  return "single-run";
}

// ---- config

ConfigMap ConfigMap::parse(const std::string& text) {
  ConfigMap map;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, "line " + std::to_string(lineno) + " is not of the form key = value");
    map.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return map;
}

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void ConfigMap::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(assignment, "override must be key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ConfigError(key, "empty key");
  if (!known_keys().contains(key)) throw ConfigError(key, "unknown key");
  values_[key] = value;
}

const std::string* ConfigMap::find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

int ExperimentConfig::steps_for(double run_dt) const {
  return static_cast<int>(std::llround(t_end / run_dt));
}

ExperimentConfig resolve_config(const ConfigMap& raw, Experiment experiment) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  auto need = [&](const std::string& key) -> const std::string& {
    const std::string* v = raw.find(key);
    if (!v) throw ConfigError(key, "missing required key");
    return *v;
  };
  auto real = [&](const std::string& key, double fallback) {
    const std::string* v = raw.find(key);
    return v ? to_double(key, *v) : fallback;
  };
  auto integer = [&](const std::string& key, long long fallback) {
    const std::string* v = raw.find(key);
    return v ? to_integer(key, *v) : fallback;
  };
  auto flag = [&](const std::string& key, bool fallback) {
    const std::string* v = raw.find(key);
    return v ? to_bool(key, *v) : fallback;
  };
  auto positive = [](const std::string& key, double v) {
    if (!(v > 0.0)) throw ConfigError(key, "must be positive");
    return v;
  };

  // a resolved dump names its experiment; it has to agree with the requested one
  if (const std::string* v = raw.find("experiment"); v && trim(*v) != experiment_name(experiment))
    throw ConfigError("experiment", "file is for '" + trim(*v) + "', not '" + experiment_name(experiment) + "'");
  cfg.cn = positive("Cn", to_double("Cn", need("Cn")));
  cfg.pe = positive("Pe", to_double("Pe", need("Pe")));
  cfg.surface = trim(need("surface"));
  if (cfg.surface == "sphere") {
    cfg.radius = positive("radius", real("radius", 1.0));
    cfg.domain_lower = -1.25;
    cfg.domain_upper = 1.25;
  } else if (cfg.surface == "torus") {
    cfg.torus_R = positive("R", real("R", 1.0));
    cfg.torus_r = positive("r", real("r", 0.5));
    if (!(cfg.torus_r < cfg.torus_R)) throw ConfigError("r", "tube radius must be below the centerline radius");
    cfg.domain_lower = -1.75;
    cfg.domain_upper = 1.75;
  } else {
    throw ConfigError("surface", "expected sphere or torus, got '" + cfg.surface + "'");
  }
  cfg.domain_lower = real("domain_lower", cfg.domain_lower);
  cfg.domain_upper = real("domain_upper", cfg.domain_upper);
  if (!(cfg.domain_upper > cfg.domain_lower)) throw ConfigError("domain_upper", "must exceed domain_lower");

  if (experiment == Experiment::kGridConvergence) {
    for (const auto& item : split_list(need("grids"))) {
      const long long n = to_integer("grids", item);
      if (n < 8) throw ConfigError("grids", "grid sizes must be at least 8");
      cfg.grids.push_back(static_cast<int>(n));
    }
    if (cfg.grids.size() < 2) throw ConfigError("grids", "need at least two grids");
    if (!std::is_sorted(cfg.grids.begin(), cfg.grids.end()) ||
        std::adjacent_find(cfg.grids.begin(), cfg.grids.end()) != cfg.grids.end())
      throw ConfigError("grids", "grid sizes must be strictly increasing");
    cfg.N = static_cast<int>(integer("N", cfg.grids.front()));
  } else {
    cfg.N = static_cast<int>(to_integer("N", need("N")));
    if (cfg.N < 8) throw ConfigError("N", "must be at least 8");
  }

  const std::string* pot = raw.find("potential");
  if (pot) {
    const std::string p = trim(*pot);
    if (p == "standard") cfg.potential = Potential::kStandard;
    else if (p == "scaled") cfg.potential = Potential::kScaled;
    else throw ConfigError("potential", "expected standard or scaled, got '" + p + "'");
  } else if (experiment == Experiment::kTorus) {
    cfg.potential = Potential::kScaled;
  }

  if (const std::string* s = raw.find("scheme")) cfg.order = parse_scheme("scheme", *s);
  if (experiment == Experiment::kGridConvergence) cfg.order = 2;

  cfg.t_end = positive("t_end", to_double("t_end", need("t_end")));
  if (experiment == Experiment::kTimeConvergence) {
    for (const auto& item : split_list(need("dt_list")))
      cfg.dt_list.push_back(positive("dt_list", to_double("dt_list", item)));
    std::sort(cfg.dt_list.begin(), cfg.dt_list.end(), std::greater<>());
    cfg.dt = real("dt", cfg.dt_list.back());
  } else {
    cfg.dt = to_double("dt", need("dt"));
  }
  positive("dt", cfg.dt);
  const double smallest_dt = cfg.dt_list.empty() ? cfg.dt : cfg.dt_list.back();
  const double largest_dt = cfg.dt_list.empty() ? cfg.dt : cfg.dt_list.front();
  if (cfg.t_end < smallest_dt) throw ConfigError("t_end", "must be at least dt");
  for (double d : cfg.dt_list.empty() ? std::vector<double>{cfg.dt} : cfg.dt_list) {
    const double steps = cfg.t_end / d;
    if (std::abs(steps - std::round(steps)) > 1e-6 * steps)
      throw ConfigError(cfg.dt_list.empty() ? "dt" : "dt_list", "t_end must be an integer multiple of every step");
  }

  if (const std::string* v = raw.find("dt_max")) {
    if (trim(*v) != "dt") {
      cfg.dt_max = positive("dt_max", to_double("dt_max", *v));
      if (largest_dt > *cfg.dt_max * (1.0 + 1e-12)) throw ConfigError("dt_max", "every dt must be <= dt_max");
    }
  }

  if (const std::string* v = raw.find("ic")) {
    const std::string t = trim(*v);
    if (t == "sphere") cfg.ic = InitialCondition::kSphere;
    else if (t == "zero") cfg.ic = InitialCondition::kZero;
    else if (t == "constant") cfg.ic = InitialCondition::kConstant;
    else if (t == "random") cfg.ic = InitialCondition::kRandom;
    else if (t == "harmonic") cfg.ic = InitialCondition::kHarmonic;
    else throw ConfigError("ic", "expected sphere, zero, constant, random or harmonic, got '" + t + "'");
  } else {
    cfg.ic = cfg.surface == "torus" ? InitialCondition::kRandom : InitialCondition::kSphere;
  }
  if (cfg.ic == InitialCondition::kConstant) cfg.ic_value = to_double("ic_value", need("ic_value"));
  cfg.ic_l = static_cast<int>(integer("ic_l", 1));
  cfg.ic_m = static_cast<int>(integer("ic_m", 0));
  if (cfg.ic == InitialCondition::kHarmonic) {
    if (cfg.surface != "sphere") throw ConfigError("ic", "harmonic initial data needs a sphere");
    if (cfg.ic_l < 0 || std::abs(cfg.ic_m) > cfg.ic_l) throw ConfigError("ic_m", "need |ic_m| <= ic_l");
  }
  const long long seed = integer("seed", 1);
  if (seed < 0) throw ConfigError("seed", "must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.ic_coarse_N = static_cast<int>(integer("ic_coarse_N", 97));
  if (cfg.ic_coarse_N < 8) throw ConfigError("ic_coarse_N", "must be at least 8");

  cfg.rtol = positive("rtol", real("rtol", 1e-8));
  cfg.max_iter = static_cast<int>(integer("max_iter", 50));
  if (cfg.max_iter < 1) throw ConfigError("max_iter", "must be at least 1");
  cfg.conserve = flag("conserve", true);
  if (const std::string* v = raw.find("schur")) {
    const std::string t = trim(*v);
    if (t == "complex-split") cfg.schur_method = SchurMethod::kComplexSplit;
    else if (t == "direct") cfg.schur_method = SchurMethod::kDirect;
    else throw ConfigError("schur", "expected complex-split or direct, got '" + t + "'");
  }

  cfg.output_dir = raw.find("output_dir") ? trim(*raw.find("output_dir")) : "out/" + experiment_name(experiment);
  if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (const std::string* v = raw.find("snapshot_times")) {
    for (const auto& item : split_list(*v)) {
      const double ts = to_double("snapshot_times", item);
      if (ts < -0.5 * cfg.dt || ts > cfg.t_end + 0.5 * cfg.dt)
        throw ConfigError("snapshot_times", "snapshot time " + item + " is outside [0, t_end]");
      cfg.snapshot_times.push_back(ts);
    }
    std::sort(cfg.snapshot_times.begin(), cfg.snapshot_times.end());
  } else if (experiment == Experiment::kTorus) {
    for (double ts : {0.2, 0.3, 1.0, 2.0, 5.0})
      if (ts <= cfg.t_end + 0.5 * cfg.dt) cfg.snapshot_times.push_back(ts);
  }
  cfg.write_vtk = flag("write_vtk", false);
  cfg.dump_band = flag("dump_band", false);
  cfg.export_matrices = flag("export_matrices", false);

  if (const std::string* v = raw.find("schemes")) {
    cfg.orders.clear();
    for (const auto& item : split_list(*v)) cfg.orders.push_back(parse_scheme("schemes", item));
    if (cfg.orders.empty()) throw ConfigError("schemes", "must list at least one scheme");
  }
  if (const std::string* v = raw.find("reference")) {
    const std::string t = trim(*v);
    if (t == "same-grid") cfg.reference = ReferenceMode::kSameGrid;
    else if (t == "fine-grid") cfg.reference = ReferenceMode::kFineGrid;
    else throw ConfigError("reference", "expected same-grid or fine-grid, got '" + t + "'");
  }
  cfg.reference_factor = static_cast<int>(integer("reference_factor", 8));
  if (cfg.reference_factor < 1) throw ConfigError("reference_factor", "must be at least 1");
  if (experiment == Experiment::kTimeConvergence && cfg.reference == ReferenceMode::kFineGrid) {
    cfg.reference_N = static_cast<int>(to_integer("reference_N", need("reference_N")));
    if (cfg.reference_N <= cfg.N) throw ConfigError("reference_N", "must exceed N");
    cfg.reference_dt = positive("reference_dt", to_double("reference_dt", need("reference_dt")));
    const double steps = cfg.t_end / cfg.reference_dt;
    if (std::abs(steps - std::round(steps)) > 1e-6 * steps)
      throw ConfigError("reference_dt", "t_end must be an integer multiple of reference_dt");
  }
  if (experiment == Experiment::kTorus && cfg.surface != "torus")
    throw ConfigError("surface", "the torus experiment needs surface = torus");
  if (experiment == Experiment::kTimeConvergence || experiment == Experiment::kGridConvergence) {
    if (cfg.surface != "sphere") throw ConfigError("surface", "convergence studies run on the sphere");
  }
  return cfg;
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  auto line = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto list = [](const auto& xs) {
    std::string s;
    for (const auto& x : xs) {
      if (!s.empty()) s += ", ";
      if constexpr (std::is_same_v<std::decay_t<decltype(x)>, double>) s += fmt(x);
      else s += std::to_string(x);
    }
    return s;
  };
  line("experiment", experiment_name(cfg.experiment));
  line("surface", cfg.surface);
  if (cfg.surface == "sphere") {
    line("radius", fmt(cfg.radius));
  } else {
    line("R", fmt(cfg.torus_R));
    line("r", fmt(cfg.torus_r));
  }
  line("domain_lower", fmt(cfg.domain_lower));
  line("domain_upper", fmt(cfg.domain_upper));
  line("N", std::to_string(cfg.N));
  line("Cn", fmt(cfg.cn));
  line("Pe", fmt(cfg.pe));
  line("potential", cfg.potential == Potential::kScaled ? "scaled" : "standard");
  line("scheme", cfg.order == 1 ? "bdf1" : "bdf2");
  line("dt", fmt(cfg.dt));
  line("dt_max", cfg.dt_max ? fmt(*cfg.dt_max) : "dt");
  line("t_end", fmt(cfg.t_end));
  static const char* ic_names[] = {"sphere", "zero", "constant", "random", "harmonic"};
  line("ic", ic_names[static_cast<int>(cfg.ic)]);
  line("ic_value", fmt(cfg.ic_value));
  line("ic_l", std::to_string(cfg.ic_l));
  line("ic_m", std::to_string(cfg.ic_m));
  line("seed", std::to_string(cfg.seed));
  line("ic_coarse_N", std::to_string(cfg.ic_coarse_N));
  line("rtol", fmt(cfg.rtol));
  line("max_iter", std::to_string(cfg.max_iter));
  line("conserve", cfg.conserve ? "true" : "false");
  line("schur", cfg.schur_method == SchurMethod::kDirect ? "direct" : "complex-split");
  line("output_dir", cfg.output_dir);
  line("snapshot_times", list(cfg.snapshot_times));
  line("write_vtk", cfg.write_vtk ? "true" : "false");
  line("dump_band", cfg.dump_band ? "true" : "false");
  line("export_matrices", cfg.export_matrices ? "true" : "false");
  if (cfg.experiment == Experiment::kGridConvergence) line("grids", list(cfg.grids));
  if (cfg.experiment == Experiment::kTimeConvergence) {
    line("dt_list", list(cfg.dt_list));
    std::vector<std::string> names;
    for (int o : cfg.orders) names.push_back(o == 1 ? "bdf1" : "bdf2");
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
    line("schemes", s);
    line("reference", cfg.reference == ReferenceMode::kFineGrid ? "fine-grid" : "same-grid");
    line("reference_factor", std::to_string(cfg.reference_factor));
    if (cfg.reference == ReferenceMode::kFineGrid) {
      line("reference_N", std::to_string(cfg.reference_N));
      line("reference_dt", fmt(cfg.reference_dt));
    }
  }
  return os.str();
}

std::string output_directory(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  if (const char* root = std::getenv("CPCH_OUTPUT_ROOT"); root && *root && dir.is_relative())
    dir = std::filesystem::path(root) / dir;
  return dir.string();
}

// ---- initial conditions

double ic_sphere(const Vec3& x) { return std::cos(std::cosh(5.0 * x[0] * x[2]) - 10.0 * x[1]); }

std::vector<double> random_coarse_field(std::uint64_t seed, const GridSpec& coarse) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.41, -0.39);
  const std::size_t n = static_cast<std::size_t>(coarse.n());
  std::vector<double> values(n * n * n);
  for (double& v : values) v = dist(rng);
  return values;
}

std::vector<double> interpolate_grid_field(const GridSpec& grid, std::span<const double> values,
                                           std::span<const Vec3> points) {
  const std::size_t n = static_cast<std::size_t>(grid.n());
  if (values.size() != n * n * n) throw Error(ErrorCode::kDimensionMismatch, "grid field has the wrong size");
  std::vector<double> out(points.size());
  double w[3][4];
  for (std::size_t p = 0; p < points.size(); ++p) {
    const NodeIndex base = interp_stencil_base(points[p], grid, 3);
    for (int a = 0; a < 3; ++a) {
      const double t = (points[p][a] - grid.lower()[a]) / grid.h() - base[a];
      lagrange_weights_1d(3, t, w[a]);
    }
    double sum = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c)
          sum += w[0][a] * w[1][b] * w[2][c] *
                 values[static_cast<std::size_t>(grid.linear({base[0] + a, base[1] + b, base[2] + c}))];
    out[p] = sum;
  }
  return out;
}

std::vector<double> ic_torus_random(std::uint64_t seed, const GridSpec& coarse, std::span<const Vec3> points) {
  return interpolate_grid_field(coarse, random_coarse_field(seed, coarse), points);
}

SurfaceMap make_surface(const ExperimentConfig& cfg) {
  if (cfg.surface == "torus") return SurfaceMap::torus(cfg.torus_R, cfg.torus_r);
  return SurfaceMap::sphere(cfg.radius);
}

Discretization Discretization::build(const ExperimentConfig& cfg, int N) {
  SurfaceMap surface = make_surface(cfg);
  GridSpec grid = GridSpec::cube(cfg.domain_lower, cfg.domain_upper, N);
  Band band(surface, grid);
  SurfaceOperators ops = SurfaceOperators::build(band);
  return Discretization{std::move(surface), grid, std::move(band), std::move(ops)};
}

std::vector<double> initial_field(const ExperimentConfig& cfg, const Discretization& disc) {
  const auto& cps = disc.band.closest_points();
  std::vector<double> f(cps.size(), 0.0);
  switch (cfg.ic) {
    case InitialCondition::kSphere:
      for (std::size_t i = 0; i < cps.size(); ++i) f[i] = ic_sphere(cps[i]);
      break;
    case InitialCondition::kZero:
      break;
    case InitialCondition::kConstant:
      std::fill(f.begin(), f.end(), cfg.ic_value);
      break;
    case InitialCondition::kRandom: {
      const GridSpec coarse = GridSpec::cube(cfg.domain_lower, cfg.domain_upper, cfg.ic_coarse_N);
      f = ic_torus_random(cfg.seed, coarse, cps);
      break;
    }
    case InitialCondition::kHarmonic:
      for (std::size_t i = 0; i < cps.size(); ++i) {
        const Vec3 u = (1.0 / norm(cps[i])) * cps[i];
        f[i] = real_spherical_harmonic(cfg.ic_l, cfg.ic_m, u);
      }
      break;
  }
  return f;
}

// ---- runs

RunResult integrate(const ExperimentConfig& cfg, const Discretization& disc, std::vector<double> f0,
                    const RunSpec& spec, const std::function<void(const ChState&, SnapshotInfo&)>& on_snapshot) {
  const ChModel model{cfg.cn, cfg.pe, cfg.potential};
  StepperOptions options;
  options.order = spec.order;
  options.dt = spec.dt;
  options.dt_max = spec.dt_max;
  options.solve.rtol = cfg.rtol;
  options.solve.max_iter = cfg.max_iter;
  options.conserve = cfg.conserve;
  options.schur_method = cfg.schur_method;

  const SparseOperator& extended = disc.ops.extended;
  const double area = disc.surface.area();
  RunResult result;
  result.state = make_initial_state(std::move(f0), model, extended, area);
  ChStepper stepper(extended, area, model, options);

  std::vector<int> snaps = spec.snapshot_steps;
  std::sort(snaps.begin(), snaps.end());
  std::size_t next_snap = 0;
  auto maybe_snapshot = [&](const ChState& state) {
    while (next_snap < snaps.size() && snaps[next_snap] <= state.step_index) {
      if (snaps[next_snap] == state.step_index) {
        SnapshotInfo info;
        info.t = static_cast<double>(state.step_index) * spec.dt;
        info.step = state.step_index;
        info.domains = count_domains(disc.band, state.f_now);
        if (on_snapshot) on_snapshot(state, info);
        result.snapshots.push_back(info);
      }
      ++next_snap;
    }
  };

  DiagnosticsRow row;
  row.mass = mass(result.state.f_now, area);
  row.energy = energy(result.state.f_now, model, extended, area);
  result.diagnostics.push_back(row);
  maybe_snapshot(result.state);

  for (int s = 0; s < spec.steps; ++s) {
    StepReport report;
    try {
      report = stepper.step(result.state);
    } catch (const Error& e) {
      result.failure = e.what();
      result.factorizations = stepper.factorizations();
      return result;
    }
    row.step = result.state.step_index;
    row.t = static_cast<double>(result.state.step_index) * spec.dt;
    row.mass = mass(result.state.f_now, area);
    row.energy = energy(result.state.f_now, model, extended, area);
    row.correction = report.correction;
    row.iterations = report.iterations;
    row.residual = report.residual;
    result.diagnostics.push_back(row);
    result.max_iterations = std::max(result.max_iterations, report.iterations);
    maybe_snapshot(result.state);
  }
  result.factorizations = stepper.factorizations();
  result.completed = true;
  return result;
}

int count_domains(const Band& band, std::span<const double> f) {
  if (f.size() != band.size()) throw Error(ErrorCode::kDimensionMismatch, "field does not match the band");
  static constexpr NodeIndex kNeighbors[6] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  std::vector<char> seen(f.size(), 0);
  std::vector<std::size_t> stack;
  int domains = 0;
  for (std::size_t start = 0; start < f.size(); ++start) {
    if (seen[start] || !(f[start] > 0.0)) continue;
    ++domains;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const NodeIndex& node = band.nodes()[i];
      for (const auto& d : kNeighbors) {
        const int j = band.index_of({node[0] + d[0], node[1] + d[1], node[2] + d[2]});
        if (j < 0) continue;
        const auto ju = static_cast<std::size_t>(j);
        if (!seen[ju] && f[ju] > 0.0) {
          seen[ju] = 1;
          stack.push_back(ju);
        }
      }
    }
  }
  return domains;
}

void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRow>& rows) {
  std::ofstream os = open_output(path);
  os << "step,t,mass,energy,correction,iters,residual\n";
  for (const auto& r : rows)
    os << r.step << ',' << fmt(r.t) << ',' << fmt(r.mass) << ',' << fmt(r.energy) << ',' << fmt(r.correction)
       << ',' << r.iterations << ',' << fmt(r.residual) << '\n';
}

void write_point_cloud(const std::string& path, const Band& band, std::span<const double> f) {
  std::ofstream os = open_output(path);
  os.precision(10);
  const auto& cps = band.closest_points();
  for (std::size_t i = 0; i < cps.size(); ++i)
    os << cps[i][0] << ' ' << cps[i][1] << ' ' << cps[i][2] << ' ' << f[i] << '\n';
}

void write_vtk(const std::string& path, const Band& band, std::span<const double> f) {
  std::ofstream os = open_output(path);
  const GridSpec& g = band.grid();
  const int n = g.n();
  os << "# vtk DataFile Version 3.0\ncpch phase field\nASCII\nDATASET STRUCTURED_POINTS\n";
  os << "DIMENSIONS " << n << ' ' << n << ' ' << n << '\n';
  os << "ORIGIN " << g.lower()[0] << ' ' << g.lower()[1] << ' ' << g.lower()[2] << '\n';
  os << "SPACING " << g.h() << ' ' << g.h() << ' ' << g.h() << '\n';
  os << "POINT_DATA " << static_cast<long long>(n) * n * n << '\n';
  // VTK orders x fastest
  os << "SCALARS f double 1\nLOOKUP_TABLE default\n";
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int idx = band.index_of({i, j, k});
        os << (idx >= 0 ? f[static_cast<std::size_t>(idx)] : 0.0) << '\n';
      }
  os << "SCALARS band unsigned_char 1\nLOOKUP_TABLE default\n";
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) os << (band.contains({i, j, k}) ? 1 : 0) << '\n';
}

// ---- error reports

double observed_order(double e_a, double e_b, double a, double b) {
  if (!(e_a > 0.0) || !(e_b > 0.0) || a == b) return kNaN;
  return std::log(e_a / e_b) / std::log(a / b);
}

double ladder_order(double d0, double d1, double h0, double h1, double h2) {
  if (!(d0 > 0.0) || !(d1 > 0.0) || !(h0 > h1 && h1 > h2 && h2 > 0.0)) return kNaN;
  const double target = std::log(d0 / d1);
  // log of (h0^p - h1^p)/(h1^p - h2^p), increasing in p
  auto g = [&](double p) {
    return std::log(std::pow(h0, p) - std::pow(h1, p)) - std::log(std::pow(h1, p) - std::pow(h2, p)) - target;
  };
  double lo = 1e-6, hi = 12.0;
  double glo = g(lo), ghi = g(hi);
  if (glo > 0.0 || ghi < 0.0) return kNaN;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

void write_error_csv(const std::string& path, const ErrorReport& report) {
  std::ofstream os = open_output(path);
  os << "N,h,scheme,dt,err_f,err_mu,order_f,order_mu\n";
  for (const auto& r : report.rows)
    os << r.N << ',' << fmt(r.h) << ",bdf" << r.order << ',' << fmt(r.dt) << ',' << fmt(r.err_f) << ','
       << fmt(r.err_mu) << ',' << fmt(r.order_f) << ',' << fmt(r.order_mu) << '\n';
}

ErrorReport read_error_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot read '" + path + "'");
  ErrorReport report;
  std::string line;
  std::getline(is, line);
  auto num = [](const std::string& s) { return s == "nan" ? kNaN : std::stod(s); };
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 8) throw Error(ErrorCode::kIo, "malformed error table row: " + line);
    ErrorRow r;
    r.N = std::stoi(cols[0]);
    r.h = num(cols[1]);
    r.order = cols[2] == "bdf1" ? 1 : 2;
    r.dt = num(cols[3]);
    r.err_f = num(cols[4]);
    r.err_mu = num(cols[5]);
    r.order_f = num(cols[6]);
    r.order_mu = num(cols[7]);
    report.rows.push_back(r);
  }
  return report;
}

double max_error_at_cp(const SparseOperator& e3, std::span<const double> a, std::span<const double> b_at_cp) {
  const std::vector<double> a_cp = e3 * a;
  if (a_cp.size() != b_at_cp.size()) throw Error(ErrorCode::kDimensionMismatch, "error fields differ in size");
  double err = 0.0;
  for (std::size_t i = 0; i < a_cp.size(); ++i) err = std::max(err, std::abs(a_cp[i] - b_at_cp[i]));
  return err;
}

namespace {

void prepare_directory(const std::string& dir, const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory '" + dir + "': " + ec.message());
  std::ofstream os = open_output(dir + "/config.resolved");
  os << format_config(cfg);
}

void write_extras(const std::string& dir, const ExperimentConfig& cfg, const Discretization& disc,
                  const std::string& tag) {
  if (cfg.dump_band) {
    std::ofstream os = open_output(dir + "/band" + tag + ".csv");
    disc.band.write_csv(os);
  }
  if (cfg.export_matrices) {
    const std::pair<const char*, const SparseOperator*> mats[] = {{"laplacian", &disc.ops.laplacian},
                                                                  {"e1", &disc.ops.e1},
                                                                  {"e3", &disc.ops.e3},
                                                                  {"extended", &disc.ops.extended}};
    for (const auto& [name, m] : mats) {
      std::ofstream os = open_output(dir + "/" + name + tag + ".coo");
      m->write_coordinate(os);
    }
  }
}

std::string run_tag(int order, double dt) { return "bdf" + std::to_string(order) + "_dt" + short_fmt(dt); }

[[noreturn]] void fail_run(const std::string& what, const RunResult& run) {
  throw Error(ErrorCode::kDiverged, what + " failed at step " + std::to_string(run.state.step_index) + ": " +
                                        run.failure);
}

}  // namespace

ExperimentOutcome run_time_convergence(const ExperimentConfig& cfg) {
  ExperimentOutcome out;
  out.directory = output_directory(cfg);
  prepare_directory(out.directory, cfg);
  const Discretization disc = Discretization::build(cfg, cfg.N);
  write_extras(out.directory, cfg, disc, "");
  const std::vector<double> f0 = initial_field(cfg, disc);
  const std::string errors_path = out.directory + "/errors.csv";

  // reference values at the band's closest points
  std::vector<double> ref_f, ref_mu;
  {
    RunSpec spec;
    spec.order = 2;
    if (cfg.reference == ReferenceMode::kSameGrid) {
      spec.dt = cfg.dt_list.back() / cfg.reference_factor;
      spec.dt_max = cfg.effective_dt_max(spec.dt);
      spec.steps = cfg.steps_for(spec.dt);
      RunResult ref = integrate(cfg, disc, f0, spec);
      write_diagnostics_csv(out.directory + "/diagnostics_reference.csv", ref.diagnostics);
      if (!ref.completed) fail_run("reference run", ref);
      ref_f = disc.ops.e3 * std::span<const double>(ref.state.f_now);
      ref_mu = disc.ops.e3 * std::span<const double>(ref.state.mu);
    } else {
      const Discretization fine = Discretization::build(cfg, cfg.reference_N);
      spec.dt = cfg.reference_dt;
      spec.dt_max = cfg.effective_dt_max(spec.dt);
      spec.steps = cfg.steps_for(spec.dt);
      RunResult ref = integrate(cfg, fine, initial_field(cfg, fine), spec);
      write_diagnostics_csv(out.directory + "/diagnostics_reference.csv", ref.diagnostics);
      if (!ref.completed) fail_run("reference run", ref);
      const SparseOperator to_coarse = interpolation_matrix(fine.band, disc.band.closest_points(), 3);
      ref_f = to_coarse * std::span<const double>(ref.state.f_now);
      ref_mu = to_coarse * std::span<const double>(ref.state.mu);
    }
  }

  for (int order : cfg.orders) {
    std::size_t first_row = out.errors.rows.size();
    for (double dt : cfg.dt_list) {
      RunSpec spec;
      spec.order = order;
      spec.dt = dt;
      spec.dt_max = cfg.effective_dt_max(dt);
      spec.steps = cfg.steps_for(dt);
      RunResult run = integrate(cfg, disc, f0, spec);
      write_diagnostics_csv(out.directory + "/diagnostics_" + run_tag(order, dt) + ".csv", run.diagnostics);
      if (!run.completed) {
        write_error_csv(errors_path, out.errors);
        fail_run("run " + run_tag(order, dt), run);
      }
      ErrorRow row;
      row.N = cfg.N;
      row.h = disc.grid.h();
      row.order = order;
      row.dt = dt;
      row.err_f = max_error_at_cp(disc.ops.e3, run.state.f_now, ref_f);
      row.err_mu = max_error_at_cp(disc.ops.e3, run.state.mu, ref_mu);
      row.order_f = kNaN;
      row.order_mu = kNaN;
      if (out.errors.rows.size() > first_row) {
        const ErrorRow& prev = out.errors.rows.back();
        row.order_f = observed_order(prev.err_f, row.err_f, prev.dt, row.dt);
        row.order_mu = observed_order(prev.err_mu, row.err_mu, prev.dt, row.dt);
      }
      out.errors.rows.push_back(row);
      out.runs.push_back(std::move(run));
    }
  }
  write_error_csv(errors_path, out.errors);
  return out;
}

ExperimentOutcome run_grid_convergence(const ExperimentConfig& cfg) {
  ExperimentOutcome out;
  out.directory = output_directory(cfg);
  prepare_directory(out.directory, cfg);
  const std::string errors_path = out.directory + "/errors.csv";

  std::optional<Discretization> coarser;
  std::vector<double> coarser_f, coarser_mu;
  std::vector<double> diffs_f, diffs_mu, hs;
  for (int N : cfg.grids) {
    Discretization disc = Discretization::build(cfg, N);
    write_extras(out.directory, cfg, disc, "_N" + std::to_string(N));
    RunSpec spec;
    spec.order = 2;
    spec.dt = cfg.dt;
    spec.dt_max = cfg.effective_dt_max(cfg.dt);
    spec.steps = cfg.steps_for(cfg.dt);
    RunResult run = integrate(cfg, disc, initial_field(cfg, disc), spec);
    write_diagnostics_csv(out.directory + "/diagnostics_N" + std::to_string(N) + ".csv", run.diagnostics);
    if (!run.completed) {
      write_error_csv(errors_path, out.errors);
      fail_run("run N=" + std::to_string(N), run);
    }
    if (coarser) {
      const SparseOperator to_coarse = interpolation_matrix(disc.band, coarser->band.closest_points(), 3);
      const std::vector<double> fine_f = to_coarse * std::span<const double>(run.state.f_now);
      const std::vector<double> fine_mu = to_coarse * std::span<const double>(run.state.mu);
      ErrorRow& row = out.errors.rows.back();
      row.err_f = max_error_at_cp(coarser->ops.e3, coarser_f, fine_f);
      row.err_mu = max_error_at_cp(coarser->ops.e3, coarser_mu, fine_mu);
      diffs_f.push_back(row.err_f);
      diffs_mu.push_back(row.err_mu);
      const std::size_t k = diffs_f.size();
      if (k >= 2) {
        row.order_f = ladder_order(diffs_f[k - 2], diffs_f[k - 1], hs[k - 2], hs[k - 1], disc.grid.h());
        row.order_mu = ladder_order(diffs_mu[k - 2], diffs_mu[k - 1], hs[k - 2], hs[k - 1], disc.grid.h());
      }
    }
    ErrorRow row;
    row.N = N;
    row.h = disc.grid.h();
    row.order = 2;
    row.dt = cfg.dt;
    row.err_f = row.err_mu = row.order_f = row.order_mu = kNaN;
    out.errors.rows.push_back(row);
    hs.push_back(disc.grid.h());
    coarser_f = run.state.f_now;
    coarser_mu = run.state.mu;
    run.diagnostics.shrink_to_fit();
    out.runs.push_back(std::move(run));
    coarser.reset();
    coarser.emplace(std::move(disc));
  }
  write_error_csv(errors_path, out.errors);
  return out;
}

ExperimentOutcome run_single(const ExperimentConfig& cfg) {
  ExperimentOutcome out;
  out.directory = output_directory(cfg);
  prepare_directory(out.directory, cfg);
  const Discretization disc = Discretization::build(cfg, cfg.N);
  write_extras(out.directory, cfg, disc, "");

  RunSpec spec;
  spec.order = cfg.order;
  spec.dt = cfg.dt;
  spec.dt_max = cfg.effective_dt_max(cfg.dt);
  spec.steps = cfg.steps_for(cfg.dt);
  for (double ts : cfg.snapshot_times) spec.snapshot_steps.push_back(static_cast<int>(std::llround(ts / cfg.dt)));

  const std::string dir = out.directory;
  auto on_snapshot = [&](const ChState& state, SnapshotInfo& info) {
    info.path = dir + "/snapshot_t" + short_fmt(static_cast<double>(info.step) * cfg.dt) + ".xyz";
    write_point_cloud(info.path, disc.band, state.f_now);
    if (cfg.write_vtk)
      write_vtk(dir + "/snapshot_t" + short_fmt(static_cast<double>(info.step) * cfg.dt) + ".vtk", disc.band,
                state.f_now);
  };
  RunResult run = integrate(cfg, disc, initial_field(cfg, disc), spec, on_snapshot);
  write_diagnostics_csv(dir + "/diagnostics.csv", run.diagnostics);
  {
    std::ofstream os = open_output(dir + "/domains.csv");
    os << "step,t,domains\n";
    for (const auto& s : run.snapshots) os << s.step << ',' << fmt(s.t) << ',' << s.domains << '\n';
  }
  if (!run.completed) fail_run(experiment_name(cfg.experiment), run);
  out.runs.push_back(std::move(run));
  return out;
}

ExperimentOutcome run_torus_coarsening(const ExperimentConfig& cfg) {
  if (cfg.surface != "torus") throw ConfigError("surface", "the torus experiment needs surface = torus");
  return run_single(cfg);
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::kTimeConvergence: return run_time_convergence(cfg);
    case Experiment::kGridConvergence: return run_grid_convergence(cfg);
    case Experiment::kTorus: return run_torus_coarsening(cfg);
    case Experiment::kSingleRun: return run_single(cfg);
  }
  return run_single(cfg);
}

}  // namespace cpch
