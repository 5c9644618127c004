#ifndef RDROM_H
#define RDROM_H

/* C interface to the rdrom library. Every function returns an rdrom_status;
 * on failure rdrom_last_error() describes the cause for the calling thread.
 * Strings returned through out-parameters are owned by the caller and must be
 * released with rdrom_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RDROM_API __declspec(dllexport)
#else
#define RDROM_API __attribute__((visibility("default")))
#endif

typedef enum rdrom_status {
  RDROM_OK = 0,
  RDROM_INVALID_ARGUMENT = 2,
  RDROM_IO = 3,
  RDROM_PARSE = 4,
  RDROM_NUMERICAL = 5,
  RDROM_UNDEFINED_METRIC = 6,
  RDROM_CONFIG = 7,
  RDROM_STAGE_FAILURE = 8
} rdrom_status;

typedef struct rdrom_field rdrom_field;

RDROM_API const char* rdrom_version(void);
/* Message of the most recent failure on this thread; "" if none. */
RDROM_API const char* rdrom_last_error(void);
RDROM_API const char* rdrom_status_name(rdrom_status status);
RDROM_API void rdrom_string_free(char* s);

/* ---- fields: T rows (time) x K columns (space), row-major ---- */
RDROM_API rdrom_status rdrom_field_create(const double* values, size_t time_steps, size_t space_points, double dt,
                                          rdrom_field** out);
RDROM_API rdrom_status rdrom_field_load(const char* path, rdrom_field** out);
RDROM_API rdrom_status rdrom_field_save(const rdrom_field* field, const char* path);
/* spec_json uses the synthetic spec schema; truth tracks are written to
 * truth_path when it is not NULL. */
RDROM_API rdrom_status rdrom_field_synth(const char* spec_json, const char* truth_path, rdrom_field** out);
RDROM_API rdrom_status rdrom_field_dims(const rdrom_field* field, size_t* time_steps, size_t* space_points,
                                        double* dt);
/* Copies T*K values in row-major order into out (capacity in doubles). */
RDROM_API rdrom_status rdrom_field_data(const rdrom_field* field, double* out, size_t capacity);
RDROM_API void rdrom_field_free(rdrom_field* field);

RDROM_API rdrom_status rdrom_variance_explained(const rdrom_field* truth, const rdrom_field* prediction,
                                                double* out);

/* ---- models ---- */
/* Damped oscillator fit of x[0..n); writes the fit as JSON. */
RDROM_API rdrom_status rdrom_fit_oscillator(const double* x, size_t n, double dt, char** json_out);
/* RK4 trajectory of n_steps steps; y_out and z_out hold n_steps + 1 values. */
RDROM_API rdrom_status rdrom_lv_simulate(double alpha, double beta, double delta, double gamma, double y0, double z0,
                                         int n_steps, double h, double* y_out, double* z_out);
/* Grid sweep over the default grids on the first train_len samples; writes
 * the fit as JSON. */
RDROM_API rdrom_status rdrom_lv_fit(const double* y, const double* z, size_t n, int train_len, double dt,
                                    char** json_out);

/* ---- pipeline ---- */
RDROM_API rdrom_status rdrom_pipeline_validate(const char* config_json);
/* Runs the pipeline. The manifest is returned even when a stage fails, in
 * which case the status is that stage's error code. */
RDROM_API rdrom_status rdrom_pipeline_run(const char* config_json, char** manifest_out);
/* Names of the pipeline stages, comma separated. */
RDROM_API rdrom_status rdrom_pipeline_stages(char** out);

#ifdef __cplusplus
}
#endif

#endif
