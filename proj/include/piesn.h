/* Public C API of the piesn shared library.
 *
 * All entry points return a piesn_status; 0 is success. Handles are opaque
 * and must be released with the matching _free call. Error details for the
 * calling thread are available via piesn_last_error().
 */
#ifndef PIESN_H
#define PIESN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PIESN_API __declspec(dllexport)
#else
#define PIESN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum piesn_status {
    PIESN_OK = 0,
    PIESN_ERR = 1,             /* I/O or internal failure */
    PIESN_ERR_CONFIG = 2,      /* malformed config */
    PIESN_ERR_ACCEPTANCE = 3,  /* configured thresholds not met */
    PIESN_ERR_INSTABILITY = 4, /* numerical instability */
    PIESN_ERR_INVALID = 5      /* bad arguments to the API itself */
} piesn_status;

PIESN_API const char* piesn_version(void);

/* Message for the last failing call on this thread; empty string if none. */
PIESN_API const char* piesn_last_error(void);

/* Runs one toolkit command ("simulate", "train", "evaluate", "mpc",
 * "suite") against a JSON config file, writing artifacts under output_dir.
 * The return value doubles as the CLI exit code. */
PIESN_API piesn_status piesn_run(const char* command, const char* config_path,
                                 const char* output_dir);

/* Like piesn_run, with a JSON object of top-level config overrides
 * (e.g. "{\"seed\": 7, \"mode\": \"esn-only\"}"). NULL or empty applies
 * no overrides. */
PIESN_API piesn_status piesn_run_overrides(const char* command, const char* config_path,
                                           const char* output_dir, const char* overrides_json);

/* ---- trained model handles ---- */

typedef struct piesn_model piesn_model;

PIESN_API piesn_status piesn_model_load(const char* path, piesn_model** out);
PIESN_API void piesn_model_free(piesn_model* m);

PIESN_API int piesn_model_reservoir_size(const piesn_model* m);
PIESN_API int piesn_model_input_dim(const piesn_model* m);
PIESN_API int piesn_model_output_dim(const piesn_model* m);

/* Free-run prediction: drives the model with `inputs` (row-major, steps x
 * input_dim) from the zero reservoir state, feeding back its own outputs,
 * with y0 (output_dim) as the initial feedback. `outputs` receives steps x
 * output_dim, row-major. Returns PIESN_ERR_INSTABILITY on divergence. */
PIESN_API piesn_status piesn_model_predict(const piesn_model* m, const double* inputs,
                                           size_t steps, const double* y0, double* outputs);

/* Teacher-forced warmup followed by free-run prediction. The first n_warm
 * rows of inputs/targets (targets row-major, steps x output_dim) drive the
 * reservoir teacher-forced; prediction then continues over the remaining
 * rows. `outputs` receives (steps - n_warm) x output_dim. */
PIESN_API piesn_status piesn_model_predict_warm(const piesn_model* m, const double* inputs,
                                                size_t steps, const double* targets,
                                                size_t n_warm, double* outputs);

#ifdef __cplusplus
}
#endif

#endif /* PIESN_H */
