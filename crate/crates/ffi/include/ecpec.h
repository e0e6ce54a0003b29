#ifndef ECPEC_H
#define ECPEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EcpecStatus {
  ECPEC_STATUS_OK = 0,
  ECPEC_STATUS_NULL_POINTER = 1,
  ECPEC_STATUS_INVALID_UTF8 = 2,
  ECPEC_STATUS_INVALID_ARGUMENT = 3,
  ECPEC_STATUS_CORPUS = 4,
  ECPEC_STATUS_PARAMS = 5,
  ECPEC_STATUS_CONFIG = 6,
  ECPEC_STATUS_EVAL = 7,
  ECPEC_STATUS_JSON = 8,
  ECPEC_STATUS_IO = 9,
  ECPEC_STATUS_PANIC = 10,
} EcpecStatus;

// Opaque engine handle.
typedef struct EcpecEngine EcpecEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *ecpec_last_error(void);

// Creates an engine. `params_path` may be null for seeded parameters.
//
// # Safety
// `params_path` must be null or a valid NUL-terminated string; `out` must be
// a valid pointer.
enum EcpecStatus ecpec_engine_new(const char *params_path,
                                  size_t d_u,
                                  uint64_t seed,
                                  struct EcpecEngine **out);

// # Safety
// `engine` must be null or a handle from [`ecpec_engine_new`] not yet freed.
void ecpec_engine_free(struct EcpecEngine *engine);

// Replaces the hyperparameters with a JSON object; missing fields take their
// defaults. Changing `layers` is rejected.
//
// # Safety
// `engine` must be a live handle and `json` a valid NUL-terminated string.
enum EcpecStatus ecpec_engine_set_hyperparams(struct EcpecEngine *engine, const char *json);

// Worker threads for corpus calls; 0 lets the pool decide. Output does not
// depend on this value.
//
// # Safety
// `engine` must be a live handle.
enum EcpecStatus ecpec_engine_set_threads(struct EcpecEngine *engine, size_t threads);

// Runs the model over a corpus and returns `{"conversations": [...]}` in the
// `predictions.json` schema.
//
// # Safety
// `engine` must be a live handle, `corpus_json` a valid NUL-terminated
// string and `out_json` a valid pointer.
enum EcpecStatus ecpec_engine_predict(const struct EcpecEngine *engine,
                                      const char *corpus_json,
                                      char **out_json);

// Runs the model and scores it against the corpus gold pairs; returns the
// `eval.json` object.
//
// # Safety
// Same as [`ecpec_engine_predict`].
enum EcpecStatus ecpec_engine_evaluate(const struct EcpecEngine *engine,
                                       const char *corpus_json,
                                       char **out_json);

// Entropic OT with uniform marginals on a row-major `n x n` cost. Writes the
// plan to `out_plan` (n*n values) and, if non-null, the sweep count to
// `out_iterations`.
//
// # Safety
// `cost` and `out_plan` must point to `n * n` doubles; `out_iterations` must
// be null or valid.
enum EcpecStatus ecpec_sinkhorn(const double *cost,
                                size_t n,
                                double epsilon,
                                size_t max_iters,
                                double tol,
                                double *out_plan,
                                size_t *out_iterations);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void ecpec_string_free(char *s);

// Library version, static storage.
const char *ecpec_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECPEC_H */
