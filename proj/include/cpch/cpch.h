/* C interface to the closest-point Cahn-Hilliard solver. */
#ifndef CPCH_CPCH_H
#define CPCH_CPCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CPCH_API __declspec(dllexport)
#else
#define CPCH_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cpch_status {
  CPCH_OK = 0,
  CPCH_ERR_INVALID_ARGUMENT = 1,
  CPCH_ERR_SINGULAR_INPUT = 2,
  CPCH_ERR_UNSUPPORTED_SURFACE = 3,
  CPCH_ERR_DOMAIN_TOO_SMALL = 4,
  CPCH_ERR_OUT_OF_DOMAIN = 5,
  CPCH_ERR_MISSING_NEIGHBOR = 6,
  CPCH_ERR_STENCIL_OUT_OF_BAND = 7,
  CPCH_ERR_DIMENSION_MISMATCH = 8,
  CPCH_ERR_FACTORIZATION_FAILED = 9,
  CPCH_ERR_NOT_CONVERGED = 10,
  CPCH_ERR_DIVERGED = 11,
  CPCH_ERR_CONFIG = 12,
  CPCH_ERR_IO = 13,
  CPCH_ERR_INTERNAL = 99
} cpch_status;

typedef struct cpch_surface cpch_surface;
typedef struct cpch_band cpch_band;
typedef struct cpch_config cpch_config;
typedef struct cpch_simulation cpch_simulation;

/* Message of the last failed call on this thread ("" if none). */
CPCH_API const char* cpch_last_error(void);
/* Config key named by the last CPCH_ERR_CONFIG failure on this thread. */
CPCH_API const char* cpch_last_error_key(void);
CPCH_API const char* cpch_status_string(cpch_status status);

/* ---- surfaces */
CPCH_API cpch_status cpch_surface_sphere(double radius, cpch_surface** out);
CPCH_API cpch_status cpch_surface_torus(double centerline_radius, double tube_radius, cpch_surface** out);
CPCH_API void cpch_surface_destroy(cpch_surface* surface);
CPCH_API cpch_status cpch_surface_area(const cpch_surface* surface, double* area);
CPCH_API cpch_status cpch_surface_closest_point(const cpch_surface* surface, const double x[3], double cp[3]);
CPCH_API cpch_status cpch_surface_signed_distance(const cpch_surface* surface, const double x[3], double* d);

/* ---- bands on the cube [lower, upper]^3 with n nodes per axis */
CPCH_API cpch_status cpch_band_create(const cpch_surface* surface, double lower, double upper, int n,
                                      cpch_band** out);
CPCH_API void cpch_band_destroy(cpch_band* band);
CPCH_API size_t cpch_band_size(const cpch_band* band);
CPCH_API cpch_status cpch_band_write_csv(const cpch_band* band, const char* path);

/* ---- experiment configuration */
CPCH_API cpch_status cpch_config_create(cpch_config** out);
CPCH_API void cpch_config_destroy(cpch_config* config);
CPCH_API cpch_status cpch_config_load(cpch_config* config, const char* path);
CPCH_API cpch_status cpch_config_parse(cpch_config* config, const char* text);
/* One override; `assignment` is "key=value". */
CPCH_API cpch_status cpch_config_set(cpch_config* config, const char* assignment);
/* Validates the configuration for an experiment ("single-run",
 * "time-convergence", "grid-convergence" or "torus"). */
CPCH_API cpch_status cpch_config_resolve(cpch_config* config, const char* experiment);
/* Copies the resolved configuration text (NUL-terminated, truncated to
 * `size`); returns the full length. Requires a prior successful resolve. */
CPCH_API size_t cpch_config_dump(const cpch_config* config, char* buffer, size_t size);
/* Runs the resolved experiment, writing its outputs. */
CPCH_API cpch_status cpch_config_run(const cpch_config* config);
/* Output directory of the resolved experiment. */
CPCH_API size_t cpch_config_output_dir(const cpch_config* config, char* buffer, size_t size);

/* ---- step-by-step simulation from a resolved single-run/torus config */
CPCH_API cpch_status cpch_simulation_create(const cpch_config* config, cpch_simulation** out);
CPCH_API void cpch_simulation_destroy(cpch_simulation* sim);
CPCH_API size_t cpch_simulation_size(const cpch_simulation* sim);
CPCH_API cpch_status cpch_simulation_step(cpch_simulation* sim, int steps);
CPCH_API double cpch_simulation_time(const cpch_simulation* sim);
CPCH_API cpch_status cpch_simulation_mass(const cpch_simulation* sim, double* mass);
CPCH_API cpch_status cpch_simulation_energy(const cpch_simulation* sim, double* energy);
CPCH_API int cpch_simulation_last_iterations(const cpch_simulation* sim);
/* Copies f (which = 0) or mu (which = 1) into `out` of length `n`. */
CPCH_API cpch_status cpch_simulation_field(const cpch_simulation* sim, int which, double* out, size_t n);

#ifdef __cplusplus
}
#endif

#endif /* CPCH_CPCH_H */
