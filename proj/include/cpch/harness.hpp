#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpch/band.hpp"
#include "cpch/error.hpp"
#include "cpch/geometry.hpp"
#include "cpch/model.hpp"
#include "cpch/operators.hpp"

namespace cpch {

/// Invalid or missing configuration entry. `key()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(ErrorCode::kConfig, "config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class Experiment { kSingleRun, kTimeConvergence, kGridConvergence, kTorus };

Experiment parse_experiment(const std::string& name);
std::string experiment_name(Experiment e);

/// Raw `key = value` entries, in file order. Later assignments win.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text);
  static ConfigMap load(const std::string& path);

  /// Applies one `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string* find(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class InitialCondition { kSphere, kZero, kConstant, kRandom, kHarmonic };
enum class ReferenceMode { kSameGrid, kFineGrid };

struct ExperimentConfig {
  Experiment experiment = Experiment::kSingleRun;

  std::string surface = "sphere";
  double radius = 1.0;
  double torus_R = 1.0;
  double torus_r = 0.5;

  int N = 0;
  double domain_lower = -1.25;
  double domain_upper = 1.25;

  double cn = 0.0;
  double pe = 0.0;
  Potential potential = Potential::kStandard;
  int order = 2;
  double dt = 0.0;
  std::optional<double> dt_max;  // unset: the run's own dt
  double t_end = 0.0;

  InitialCondition ic = InitialCondition::kSphere;
  double ic_value = 0.0;
  int ic_l = 1;
  int ic_m = 0;
  std::uint64_t seed = 1;
  int ic_coarse_N = 97;

  double rtol = 1e-8;
  int max_iter = 50;
  bool conserve = true;
  SchurMethod schur_method = SchurMethod::kComplexSplit;

  std::string output_dir;
  std::vector<double> snapshot_times;
  bool write_vtk = false;
  bool dump_band = false;
  bool export_matrices = false;

  // ladders
  std::vector<int> grids;
  std::vector<double> dt_list;
  std::vector<int> orders{1, 2};
  ReferenceMode reference = ReferenceMode::kSameGrid;
  int reference_factor = 8;
  int reference_N = 0;
  double reference_dt = 0.0;

  double effective_dt_max(double run_dt) const { return dt_max ? *dt_max : run_dt; }
  /// Number of steps needed to reach t_end with step dt.
  int steps_for(double run_dt) const;
};

/// Validates and converts raw entries for one experiment.
/// Throws ConfigError naming the key on the first problem.
ExperimentConfig resolve_config(const ConfigMap& raw, Experiment experiment);
/// Every resolved field as `key = value` lines.
std::string format_config(const ExperimentConfig& cfg);

/// Output directory after applying the CPCH_OUTPUT_ROOT override.
std::string output_directory(const ExperimentConfig& cfg);

// ---- initial conditions

double ic_sphere(const Vec3& x);

/// Uniform draws in [-0.41, -0.39] on every node of `coarse`, in linear index
/// order, from a 64-bit Mersenne Twister seeded with `seed`.
std::vector<double> random_coarse_field(std::uint64_t seed, const GridSpec& coarse);
/// Tricubic interpolation of a full-grid nodal field at arbitrary points.
std::vector<double> interpolate_grid_field(const GridSpec& grid, std::span<const double> values,
                                           std::span<const Vec3> points);
std::vector<double> ic_torus_random(std::uint64_t seed, const GridSpec& coarse, std::span<const Vec3> points);

/// A surface with its band and closest-point operators.
struct Discretization {
  SurfaceMap surface;
  GridSpec grid;
  Band band;
  SurfaceOperators ops;

  static Discretization build(const ExperimentConfig& cfg, int N);
};

SurfaceMap make_surface(const ExperimentConfig& cfg);
std::vector<double> initial_field(const ExperimentConfig& cfg, const Discretization& disc);

// ---- runs

struct DiagnosticsRow {
  int step = 0;
  double t = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double correction = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct SnapshotInfo {
  double t = 0.0;
  int step = 0;
  int domains = 0;
  std::string path;
};

struct RunResult {
  ChState state;
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<SnapshotInfo> snapshots;
  std::size_t factorizations = 0;
  int max_iterations = 0;
  bool completed = false;
  std::string failure;
};

struct RunSpec {
  int order = 2;
  double dt = 0.0;
  double dt_max = 0.0;
  int steps = 0;
  std::vector<int> snapshot_steps;
};

/// Steps `state` with a fresh stepper and records a diagnostics row per step
/// (plus the initial one). `on_snapshot` is invoked at the requested steps.
/// Solver failures are caught and reported through RunResult::failure.
RunResult integrate(const ExperimentConfig& cfg, const Discretization& disc, std::vector<double> f0,
                    const RunSpec& spec, const std::function<void(const ChState&, SnapshotInfo&)>& on_snapshot = {});

/// Connected components of {f > 0} over 6-neighbour band adjacency.
int count_domains(const Band& band, std::span<const double> f);

void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRow>& rows);
void write_point_cloud(const std::string& path, const Band& band, std::span<const double> f);
/// Legacy structured-points VTK of the full grid: f on band nodes, 0 elsewhere,
/// plus a band mask.
void write_vtk(const std::string& path, const Band& band, std::span<const double> f);

// ---- error reports

struct ErrorRow {
  int N = 0;
  double h = 0.0;
  int order = 2;
  double dt = 0.0;
  double err_f = 0.0;   // NaN when the row has no error (finest grid)
  double err_mu = 0.0;
  double order_f = 0.0; // NaN when not defined
  double order_mu = 0.0;
};

struct ErrorReport {
  std::vector<ErrorRow> rows;
};

/// Observed order from two errors at step sizes a > b: log(e_a/e_b)/log(a/b).
double observed_order(double e_a, double e_b, double a, double b);
/// Order p of a self-convergence ladder from differences of consecutive
/// solutions: d_k ~ C (h_k^p - h_{k+1}^p). Solves
/// d0/d1 = (h0^p - h1^p)/(h1^p - h2^p) for p in (0, 12]; NaN if no root.
double ladder_order(double d0, double d1, double h0, double h1, double h2);

void write_error_csv(const std::string& path, const ErrorReport& report);
ErrorReport read_error_csv(const std::string& path);

/// Max over the band's closest points of |E3 a - b_at_cp|.
double max_error_at_cp(const SparseOperator& e3, std::span<const double> a, std::span<const double> b_at_cp);

struct ExperimentOutcome {
  ErrorReport errors;
  std::vector<RunResult> runs;
  std::string directory;
};

/// Sphere time convergence at a single grid (cfg.N): every order in
/// cfg.orders and every dt in cfg.dt_list against a BDF2 reference.
ExperimentOutcome run_time_convergence(const ExperimentConfig& cfg);
/// BDF2 self-convergence over cfg.grids at cfg.dt.
ExperimentOutcome run_grid_convergence(const ExperimentConfig& cfg);
/// Single run with snapshots and domain counts (torus or any surface).
ExperimentOutcome run_single(const ExperimentConfig& cfg);
ExperimentOutcome run_torus_coarsening(const ExperimentConfig& cfg);
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

}  // namespace cpch
