#include "cpch/cpch.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include "cpch/harness.hpp"

struct cpch_surface {
  cpch::SurfaceMap map;
};

struct cpch_band {
  cpch::Band band;
};

struct cpch_config {
  cpch::ConfigMap raw;
  std::optional<cpch::ExperimentConfig> resolved;
  std::string dump;
};

struct cpch_simulation {
  cpch::ExperimentConfig cfg;
  cpch::Discretization disc;
  cpch::ChModel model;
  std::unique_ptr<cpch::ChStepper> stepper;
  cpch::ChState state;
  int last_iterations = 0;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_key;

cpch_status fail(cpch_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class F>
cpch_status guarded(F&& body) {
  g_last_error.clear();
  g_last_key.clear();
  try {
    body();
    return CPCH_OK;
  } catch (const cpch::ConfigError& e) {
    g_last_key = e.key();
    return fail(CPCH_ERR_CONFIG, e.what());
  } catch (const cpch::Error& e) {
    return fail(static_cast<cpch_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CPCH_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CPCH_ERR_INTERNAL, e.what());
  }
}

size_t copy_out(const std::string& s, char* buffer, size_t size) {
  if (buffer && size > 0) {
    const size_t n = std::min(size - 1, s.size());
    std::memcpy(buffer, s.data(), n);
    buffer[n] = '\0';
  }
  return s.size();
}

#define CPCH_REQUIRE(cond, msg) \
  if (!(cond)) return fail(CPCH_ERR_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* cpch_last_error(void) { return g_last_error.c_str(); }
const char* cpch_last_error_key(void) { return g_last_key.c_str(); }

const char* cpch_status_string(cpch_status status) {
  switch (status) {
    case CPCH_OK: return "ok";
    case CPCH_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CPCH_ERR_SINGULAR_INPUT: return "singular input";
    case CPCH_ERR_UNSUPPORTED_SURFACE: return "unsupported surface";
    case CPCH_ERR_DOMAIN_TOO_SMALL: return "domain too small";
    case CPCH_ERR_OUT_OF_DOMAIN: return "out of domain";
    case CPCH_ERR_MISSING_NEIGHBOR: return "missing neighbor";
    case CPCH_ERR_STENCIL_OUT_OF_BAND: return "stencil out of band";
    case CPCH_ERR_DIMENSION_MISMATCH: return "dimension mismatch";
    case CPCH_ERR_FACTORIZATION_FAILED: return "factorization failed";
    case CPCH_ERR_NOT_CONVERGED: return "solver did not converge";
    case CPCH_ERR_DIVERGED: return "run diverged";
    case CPCH_ERR_CONFIG: return "configuration error";
    case CPCH_ERR_IO: return "i/o error";
    case CPCH_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

cpch_status cpch_surface_sphere(double radius, cpch_surface** out) {
  CPCH_REQUIRE(out, "null output handle");
  return guarded([&] {
    if (!(radius > 0.0)) throw cpch::Error(cpch::ErrorCode::kInvalidArgument, "sphere radius must be positive");
    *out = new cpch_surface{cpch::SurfaceMap::sphere(radius)};
  });
}

cpch_status cpch_surface_torus(double centerline_radius, double tube_radius, cpch_surface** out) {
  CPCH_REQUIRE(out, "null output handle");
  return guarded([&] { *out = new cpch_surface{cpch::SurfaceMap::torus(centerline_radius, tube_radius)}; });
}

void cpch_surface_destroy(cpch_surface* surface) { delete surface; }

cpch_status cpch_surface_area(const cpch_surface* surface, double* area) {
  CPCH_REQUIRE(surface && area, "null argument");
  *area = surface->map.area();
  return CPCH_OK;
}

cpch_status cpch_surface_closest_point(const cpch_surface* surface, const double x[3], double cp[3]) {
  CPCH_REQUIRE(surface && x && cp, "null argument");
  return guarded([&] {
    const cpch::Vec3 p = surface->map.closest_point({x[0], x[1], x[2]});
    cp[0] = p[0];
    cp[1] = p[1];
    cp[2] = p[2];
  });
}

cpch_status cpch_surface_signed_distance(const cpch_surface* surface, const double x[3], double* d) {
  CPCH_REQUIRE(surface && x && d, "null argument");
  return guarded([&] { *d = surface->map.signed_distance({x[0], x[1], x[2]}); });
}

cpch_status cpch_band_create(const cpch_surface* surface, double lower, double upper, int n, cpch_band** out) {
  CPCH_REQUIRE(surface && out, "null argument");
  return guarded([&] { *out = new cpch_band{cpch::Band(surface->map, cpch::GridSpec::cube(lower, upper, n))}; });
}

void cpch_band_destroy(cpch_band* band) { delete band; }

size_t cpch_band_size(const cpch_band* band) { return band ? band->band.size() : 0; }

cpch_status cpch_band_write_csv(const cpch_band* band, const char* path) {
  CPCH_REQUIRE(band && path, "null argument");
  return guarded([&] {
    std::ofstream os(path);
    if (!os) throw cpch::Error(cpch::ErrorCode::kIo, std::string("cannot open '") + path + "'");
    band->band.write_csv(os);
  });
}

cpch_status cpch_config_create(cpch_config** out) {
  CPCH_REQUIRE(out, "null output handle");
  return guarded([&] { *out = new cpch_config{}; });
}

void cpch_config_destroy(cpch_config* config) { delete config; }

cpch_status cpch_config_load(cpch_config* config, const char* path) {
  CPCH_REQUIRE(config && path, "null argument");
  return guarded([&] {
    const cpch::ConfigMap loaded = cpch::ConfigMap::load(path);
    for (const auto& [k, v] : loaded.values()) config->raw.set(k, v);
    config->resolved.reset();
  });
}

cpch_status cpch_config_parse(cpch_config* config, const char* text) {
  CPCH_REQUIRE(config && text, "null argument");
  return guarded([&] {
    const cpch::ConfigMap parsed = cpch::ConfigMap::parse(text);
    for (const auto& [k, v] : parsed.values()) config->raw.set(k, v);
    config->resolved.reset();
  });
}

cpch_status cpch_config_set(cpch_config* config, const char* assignment) {
  CPCH_REQUIRE(config && assignment, "null argument");
  return guarded([&] {
    config->raw.set(std::string(assignment));
    config->resolved.reset();
  });
}

cpch_status cpch_config_resolve(cpch_config* config, const char* experiment) {
  CPCH_REQUIRE(config && experiment, "null argument");
  return guarded([&] {
    config->resolved = cpch::resolve_config(config->raw, cpch::parse_experiment(experiment));
    config->dump = cpch::format_config(*config->resolved);
  });
}

size_t cpch_config_dump(const cpch_config* config, char* buffer, size_t size) {
  if (!config || !config->resolved) return copy_out("", buffer, size);
  return copy_out(config->dump, buffer, size);
}

size_t cpch_config_output_dir(const cpch_config* config, char* buffer, size_t size) {
  if (!config || !config->resolved) return copy_out("", buffer, size);
  return copy_out(cpch::output_directory(*config->resolved), buffer, size);
}

cpch_status cpch_config_run(const cpch_config* config) {
  CPCH_REQUIRE(config, "null argument");
  if (!config->resolved) return fail(CPCH_ERR_CONFIG, "configuration has not been resolved");
  return guarded([&] { cpch::run_experiment(*config->resolved); });
}

cpch_status cpch_simulation_create(const cpch_config* config, cpch_simulation** out) {
  CPCH_REQUIRE(config && out, "null argument");
  if (!config->resolved) return fail(CPCH_ERR_CONFIG, "configuration has not been resolved");
  return guarded([&] {
    const cpch::ExperimentConfig& cfg = *config->resolved;
    auto sim = std::unique_ptr<cpch_simulation>(
        new cpch_simulation{cfg, cpch::Discretization::build(cfg, cfg.N), {cfg.cn, cfg.pe, cfg.potential}, {}, {}, 0});
    cpch::StepperOptions options;
    options.order = cfg.order;
    options.dt = cfg.dt;
    options.dt_max = cfg.effective_dt_max(cfg.dt);
    options.solve.rtol = cfg.rtol;
    options.solve.max_iter = cfg.max_iter;
    options.conserve = cfg.conserve;
    options.schur_method = cfg.schur_method;
    const double area = sim->disc.surface.area();
    sim->state = cpch::make_initial_state(cpch::initial_field(cfg, sim->disc), sim->model, sim->disc.ops.extended,
                                          area);
    sim->stepper = std::make_unique<cpch::ChStepper>(sim->disc.ops.extended, area, sim->model, options);
    *out = sim.release();
  });
}

void cpch_simulation_destroy(cpch_simulation* sim) { delete sim; }

size_t cpch_simulation_size(const cpch_simulation* sim) { return sim ? sim->state.f_now.size() : 0; }

cpch_status cpch_simulation_step(cpch_simulation* sim, int steps) {
  CPCH_REQUIRE(sim && steps >= 0, "invalid argument");
  return guarded([&] {
    for (int s = 0; s < steps; ++s) sim->last_iterations = sim->stepper->step(sim->state).iterations;
  });
}

double cpch_simulation_time(const cpch_simulation* sim) { return sim ? sim->state.t : 0.0; }

cpch_status cpch_simulation_mass(const cpch_simulation* sim, double* mass) {
  CPCH_REQUIRE(sim && mass, "null argument");
  *mass = cpch::mass(sim->state.f_now, sim->disc.surface.area());
  return CPCH_OK;
}

cpch_status cpch_simulation_energy(const cpch_simulation* sim, double* energy) {
  CPCH_REQUIRE(sim && energy, "null argument");
  return guarded([&] {
    *energy = cpch::energy(sim->state.f_now, sim->model, sim->disc.ops.extended, sim->disc.surface.area());
  });
}

int cpch_simulation_last_iterations(const cpch_simulation* sim) { return sim ? sim->last_iterations : 0; }

cpch_status cpch_simulation_field(const cpch_simulation* sim, int which, double* out, size_t n) {
  CPCH_REQUIRE(sim && out, "null argument");
  CPCH_REQUIRE(which == 0 || which == 1, "field selector must be 0 (f) or 1 (mu)");
  const auto& v = which == 0 ? sim->state.f_now : sim->state.mu;
  if (n != v.size()) return fail(CPCH_ERR_DIMENSION_MISMATCH, "output buffer has the wrong length");
  std::copy(v.begin(), v.end(), out);
  return CPCH_OK;
}

}  // extern "C"
