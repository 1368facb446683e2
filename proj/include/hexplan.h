/* hexplan: planning engine for asymmetric parallel training on
 * heterogeneous GPU clusters.  C interface; everything behind opaque
 * handles, all fallible calls return a status code and fill an error
 * buffer.  Strings returned by the library are heap-allocated and must
 * be released with hexplan_string_free. */
#ifndef HEXPLAN_H
#define HEXPLAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hexplan_status {
  HEXPLAN_OK = 0,
  HEXPLAN_ERR_PARSE = 1,      /* malformed input document */
  HEXPLAN_ERR_INVALID = 2,    /* argument violates a precondition */
  HEXPLAN_ERR_INFEASIBLE = 3, /* no plan satisfies the constraints */
  HEXPLAN_ERR_LIMIT = 4,      /* instance exceeds a hard size limit */
  HEXPLAN_ERR_INTERNAL = 5
} hexplan_status;

typedef struct hexplan_cluster hexplan_cluster;
typedef struct hexplan_model hexplan_model;
typedef struct hexplan_result hexplan_result;

/* ---- construction / teardown ------------------------------------- */

/* Parse a cluster description (JSON text).  On success *out is a new
 * handle.  err/err_len: optional buffer for a diagnostic message. */
hexplan_status hexplan_cluster_parse(const char* json_text,
                                     hexplan_cluster** out,
                                     char* err, size_t err_len);

/* Synthetic heterogeneous cluster; num_gpus must be a multiple of 8. */
hexplan_status hexplan_cluster_synthetic(int num_gpus, uint64_t seed,
                                         hexplan_cluster** out,
                                         char* err, size_t err_len);

/* Copy with every inter-machine bandwidth multiplied by factor. */
hexplan_status hexplan_cluster_scale_inter(const hexplan_cluster* c,
                                           double factor,
                                           hexplan_cluster** out,
                                           char* err, size_t err_len);

char* hexplan_cluster_serialize(const hexplan_cluster* c);
void hexplan_cluster_free(hexplan_cluster* c);

hexplan_status hexplan_model_parse(const char* json_text,
                                   hexplan_model** out,
                                   char* err, size_t err_len);
char* hexplan_model_serialize(const hexplan_model* m);
void hexplan_model_free(hexplan_model* m);

/* ---- planning ------------------------------------------------------
 * config_json: scheduler configuration document; NULL or "" for
 * defaults.  Recognized keys: global_batch, micro_batch_candidates,
 * tau, balance_cap, iterations, ema_decay, seed, state_multiplier,
 * threads, random_partition. */

hexplan_status hexplan_schedule(const hexplan_cluster* c,
                                const hexplan_model* m,
                                const char* config_json,
                                hexplan_result** out,
                                char* err, size_t err_len);

/* Best uniform (D_dp, D_tp, D_pp) plan under the same cost model. */
hexplan_status hexplan_symmetric_baseline(const hexplan_cluster* c,
                                          const hexplan_model* m,
                                          const char* config_json,
                                          hexplan_result** out,
                                          char* err, size_t err_len);

/* Exhaustive optimum; only for tiny instances (<= 6 devices,
 * <= 16 layers), otherwise HEXPLAN_ERR_LIMIT. */
hexplan_status hexplan_oracle(const hexplan_cluster* c,
                              const hexplan_model* m,
                              const char* config_json,
                              hexplan_result** out,
                              char* err, size_t err_len);

/* Number of plans the oracle would enumerate, without searching. */
hexplan_status hexplan_oracle_count(const hexplan_cluster* c,
                                    const hexplan_model* m,
                                    const char* config_json,
                                    uint64_t* out_count,
                                    char* err, size_t err_len);

/* ---- experiment harnesses (results returned as JSON text) -------- */

hexplan_status hexplan_random_baseline(const hexplan_cluster* c,
                                       const hexplan_model* m,
                                       const char* config_json, int runs,
                                       char** out_json,
                                       char* err, size_t err_len);

/* scales: array of multipliers applied to inter-machine bandwidth. */
hexplan_status hexplan_bandwidth_sweep(const hexplan_cluster* c,
                                       const hexplan_model* m,
                                       const char* config_json,
                                       const double* scales, int num_scales,
                                       char** out_json,
                                       char* err, size_t err_len);

/* sizes: GPU counts; each gets a synthetic cluster and a timed run. */
hexplan_status hexplan_scale_bench(const int* sizes, int num_sizes,
                                   const hexplan_model* m,
                                   const char* config_json,
                                   char** out_json,
                                   char* err, size_t err_len);

/* ---- result accessors --------------------------------------------- */

int hexplan_result_found(const hexplan_result* r); /* 1 = feasible plan */
double hexplan_result_cost(const hexplan_result* r);
double hexplan_result_mfu(const hexplan_result* r);
/* Diagnostic when no plan was found; "" otherwise. */
const char* hexplan_result_message(const hexplan_result* r);

/* NULL when the result holds no plan (found == 0). */
char* hexplan_result_plan_json(const hexplan_result* r);
char* hexplan_result_report_json(const hexplan_result* r);
char* hexplan_result_trace_json(const hexplan_result* r);
char* hexplan_result_table(const hexplan_result* r);
void hexplan_result_free(hexplan_result* r);

/* ---- utilities ----------------------------------------------------- */

/* Run manifest document.  paths/digests: parallel arrays.  Pass a
 * negative runtime to omit the runtime field (the embedded form, so
 * artifacts stay byte-identical across reruns). */
char* hexplan_manifest_json(const char* command,
                            const char* const* input_paths,
                            const char* const* input_digests,
                            int num_inputs, uint64_t seed,
                            const char* config_json, double runtime_ms);

/* FNV-1a 64-bit digest of a byte buffer, as a hex string. */
char* hexplan_digest64(const void* data, size_t len);

const char* hexplan_version(void);
void hexplan_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HEXPLAN_H */
