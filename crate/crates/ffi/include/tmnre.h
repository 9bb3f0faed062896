#ifndef TMNRE_H
#define TMNRE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Outcome of a completed run.
typedef enum TmnreRunState {
  // The stopping rule was met.
  TMNRE_RUN_STATE_CONVERGED = 0,
  // The round limit was reached first.
  TMNRE_RUN_STATE_MAX_ROUNDS = 1,
  // Single-round MNRE.
  TMNRE_RUN_STATE_COMPLETED = 2,
} TmnreRunState;

// Result of every fallible call.
typedef enum TmnreStatus {
  TMNRE_STATUS_OK = 0,
  // A required pointer argument was null.
  TMNRE_STATUS_NULL_ARGUMENT = 1,
  // Malformed argument: bad UTF-8, wrong length, unknown marginal.
  TMNRE_STATUS_INVALID_ARGUMENT = 2,
  // The configuration failed to parse or validate.
  TMNRE_STATUS_CONFIG = 3,
  // Training, truncation or sampling failed numerically.
  TMNRE_STATUS_NUMERIC = 4,
  // File system or serialization failure.
  TMNRE_STATUS_IO = 5,
  // The simulator reported an error.
  TMNRE_STATUS_SIMULATOR = 6,
  // A panic was caught at the boundary.
  TMNRE_STATUS_PANIC = 7,
} TmnreStatus;

// Opaque handle to a finished run.
typedef struct TmnreRun TmnreRun;

// Scalar summary of a run.
typedef struct TmnreRunInfo {
  // Parameter dimension.
  size_t dim;
  // Length of the observation.
  size_t x_dim;
  // Number of constraining rounds.
  size_t constraining_rounds;
  // Simulations over all rounds.
  size_t total_simulations;
  // Trained marginal heads available for evaluation and sampling.
  size_t marginals;
  // A `TmnreRunState` value.
  int32_t state;
} TmnreRunInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tmnre_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on the same thread.
const char *tmnre_last_error(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void tmnre_string_free(char *s);

// Parses a TOML run configuration, runs it to completion and stores the
// handle in `*out`. Nothing is written to disk.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out` writable.
enum TmnreStatus tmnre_run_from_toml(const char *config_toml, struct TmnreRun **out);

// Releases a run. Null is ignored.
//
// # Safety
// `run` must come from `tmnre_run_from_toml` and not have been freed.
void tmnre_run_free(struct TmnreRun *run);

// # Safety
// `run` must be a live handle and `out` writable.
enum TmnreStatus tmnre_run_info(const struct TmnreRun *run, struct TmnreRunInfo *out);

// Copies the bounds of the final region into `lo` and `hi`, each of
// length `len` (the parameter dimension).
//
// # Safety
// `lo` and `hi` must each hold `len` doubles.
enum TmnreStatus tmnre_run_region(const struct TmnreRun *run, double *lo, double *hi, size_t len);

// Per-round history as JSON. Free the result with `tmnre_string_free`.
//
// # Safety
// `run` must be a live handle and `out` writable.
enum TmnreStatus tmnre_run_history_json(const struct TmnreRun *run, char **out);

// Evaluates the log ratio of the marginal over `dims` (ascending, one or
// two entries) at `n` points stored row-major in `theta`, writing `n`
// values to `out`. The observation is the run's own.
//
// # Safety
// `dims` holds `ndims` entries, `theta` holds `n * ndims` doubles and
// `out` holds `n` doubles.
enum TmnreStatus tmnre_run_log_ratio(const struct TmnreRun *run,
                                     const size_t *dims,
                                     size_t ndims,
                                     const double *theta,
                                     size_t n,
                                     double *out);

// Draws `n` posterior samples of the marginal over `dims` by rejection
// from the truncated prior. Rows are written to `out`, which must hold
// `out_len >= n * ndims` doubles. Equal seeds give equal samples.
//
// # Safety
// `dims` holds `ndims` entries and `out` holds `out_len` doubles.
enum TmnreStatus tmnre_run_sample(const struct TmnreRun *run,
                                  const size_t *dims,
                                  size_t ndims,
                                  size_t n,
                                  uint64_t seed,
                                  double *out,
                                  size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TMNRE_H */
