/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CM4FQ_H
#define CM4FQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Cm4fqStatus {
  CM4FQ_STATUS_OK = 0,
  CM4FQ_STATUS_NULL_POINTER = 1,
  CM4FQ_STATUS_INVALID_UTF8 = 2,
  // Scenario or argument rejected.
  CM4FQ_STATUS_CONFIG = 3,
  CM4FQ_STATUS_IO = 4,
  CM4FQ_STATUS_SIMULATION = 5,
  CM4FQ_STATUS_OUT_OF_RANGE = 6,
  CM4FQ_STATUS_ORACLE = 7,
  // A value does not fit the 64-bit rational representation.
  CM4FQ_STATUS_OVERFLOW = 8,
  CM4FQ_STATUS_PANIC = 9,
} Cm4fqStatus;

typedef enum Cm4fqVariant {
  CM4FQ_VARIANT_FULL = 0,
  CM4FQ_VARIANT_REDUCED = 1,
  CM4FQ_VARIANT_SFQ = 2,
} Cm4fqVariant;

typedef struct Cm4fqFoc Cm4fqFoc;

typedef struct Cm4fqScenario Cm4fqScenario;

typedef struct Cm4fqTrace Cm4fqTrace;

// Exact value `num / den` with `den > 0`.
typedef struct Cm4fqRational {
  int64_t num;
  int64_t den;
} Cm4fqRational;

typedef struct Cm4fqDispatch {
  struct Cm4fqRational time;
  double time_seconds;
  size_t server;
  size_t user;
  uint64_t length;
  // Per-user packet sequence number.
  uint64_t seq;
} Cm4fqDispatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cm4fq_version(void);

// Message describing the last failure on this thread, or an empty string.
// Valid until the next library call on the same thread.
const char *cm4fq_last_error_message(void);

// Parses a scenario from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum Cm4fqStatus cm4fq_scenario_from_json(const char *json, struct Cm4fqScenario **out);

// Loads a scenario file, or a bundled one when `path` is `builtin:<name>`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum Cm4fqStatus cm4fq_scenario_load(const char *path, struct Cm4fqScenario **out);

// # Safety
// `scenario` must come from this library and not be used afterwards.
void cm4fq_scenario_free(struct Cm4fqScenario *scenario);

// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_scenario_user_count(const struct Cm4fqScenario *scenario, size_t *out);

// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_scenario_server_count(const struct Cm4fqScenario *scenario, size_t *out);

// Replaces the random seed used for traffic generation.
//
// # Safety
// `scenario` must be valid.
enum Cm4fqStatus cm4fq_scenario_set_seed(struct Cm4fqScenario *scenario, uint64_t seed);

// # Safety
// `scenario` must be valid.
enum Cm4fqStatus cm4fq_scenario_set_variant(struct Cm4fqScenario *scenario,
                                            enum Cm4fqVariant variant);

// Simulates the scenario under its CM4FQ variant and evaluates the checks
// listed in the scenario.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_run(const struct Cm4fqScenario *scenario, struct Cm4fqTrace **out);

// Simulates the scenario's arrivals under miDRR.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_run_midrr(const struct Cm4fqScenario *scenario, struct Cm4fqTrace **out);

// # Safety
// `trace` must come from this library and not be used afterwards.
void cm4fq_trace_free(struct Cm4fqTrace *trace);

// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_trace_dispatch_count(const struct Cm4fqTrace *trace, size_t *out);

// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_trace_dispatch(const struct Cm4fqTrace *trace,
                                      size_t index,
                                      struct Cm4fqDispatch *out);

// Bits of `user`'s packets dispatched in `[t0, t1)`.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_trace_allocated_work(const struct Cm4fqTrace *trace,
                                            size_t user,
                                            struct Cm4fqRational t0,
                                            struct Cm4fqRational t1,
                                            uint64_t *out);

// Largest finite work-level gap seen during the run.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_trace_max_gap(const struct Cm4fqTrace *trace, struct Cm4fqRational *out);

// Number of bound checks evaluated on a CM4FQ run and how many failed.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_trace_check_counts(const struct Cm4fqTrace *trace,
                                          size_t *evaluated,
                                          size_t *failed);

// Writes the trace rows as CSV.
//
// # Safety
// `trace` must be valid and `path` a NUL-terminated string.
enum Cm4fqStatus cm4fq_trace_write_csv(const struct Cm4fqTrace *trace, const char *path);

// Computes the fluid clustering.
//
// `eligibility` holds `n_users * n_servers` bytes in row-major order
// (nonzero = eligible), `rates` and `weights` one value per server and
// user, `backlogged` one byte per user (nonzero = backlogged).
//
// # Safety
// Arrays must hold the stated number of elements.
enum Cm4fqStatus cm4fq_foc_compute(size_t n_users,
                                   size_t n_servers,
                                   const uint8_t *eligibility,
                                   const struct Cm4fqRational *rates,
                                   const struct Cm4fqRational *weights,
                                   const uint8_t *backlogged,
                                   struct Cm4fqFoc **out);

// # Safety
// `foc` must come from this library and not be used afterwards.
void cm4fq_foc_free(struct Cm4fqFoc *foc);

// Number of clusters, including the zero-rate one when present. Clusters
// are indexed in increasing rate order.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_foc_cluster_count(const struct Cm4fqFoc *foc, size_t *out);

// Normalized rate of a cluster.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_foc_cluster_rate(const struct Cm4fqFoc *foc,
                                        size_t cluster,
                                        struct Cm4fqRational *out);

// Index of the cluster holding `user`.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_foc_user_cluster(const struct Cm4fqFoc *foc, size_t user, size_t *out);

// Index of the cluster holding `server`.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_foc_server_cluster(const struct Cm4fqFoc *foc, size_t server, size_t *out);

// Fair rate of `user` (weight times cluster rate).
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_foc_fair_rate(const struct Cm4fqFoc *foc,
                                     size_t user,
                                     struct Cm4fqRational *out);

// Rate that server `server` gives `user` in a fair allocation realizing
// the clustering.
//
// # Safety
// Pointers must be valid.
enum Cm4fqStatus cm4fq_foc_allocation(const struct Cm4fqFoc *foc,
                                      size_t user,
                                      size_t server,
                                      struct Cm4fqRational *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CM4FQ_H */
