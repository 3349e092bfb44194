/* tnconv: tensor-network convolution toolkit, C interface.
 *
 * The library models convolutional layers as tensor-network hypergraphs,
 * enumerates the nonredundant decompositions, evaluates and trains them, and
 * searches the design space with a multiobjective GA. All functions return a
 * tnconv_status_t; on failure tnconv_last_error() carries a message for the
 * calling thread. Strings returned through char** are heap-allocated and
 * released with tnconv_string_free().
 */
#ifndef TNCONV_H
#define TNCONV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TNCONV_API __declspec(dllexport)
#else
#define TNCONV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct tnconv_graph_t tnconv_graph_t;

typedef enum {
    TNCONV_OK = 0,
    TNCONV_ERR_INVALID = 1,    /* malformed arguments or input */
    TNCONV_ERR_VALIDATION = 2, /* structural validation failed */
    TNCONV_ERR_BUDGET = 3,     /* candidate or evaluation cap exceeded */
    TNCONV_ERR_DIVERGED = 4,   /* training loss left the finite range */
    TNCONV_ERR_IO = 5          /* filesystem problem */
} tnconv_status_t;

TNCONV_API const char* tnconv_version(void);
TNCONV_API const char* tnconv_last_error(void);
TNCONV_API void tnconv_string_free(char* s);

/* Geometry strings: "in=32x32,c=16,cout=16,filter=3x3,stride=1,pad=1";
 * "pad" may be omitted for size-preserving padding. 3D uses 32x32x32 forms.
 * Rank strings: "a=16,b=16" style named rank dims. */

/* -- graphs ------------------------------------------------------------- */

TNCONV_API tnconv_status_t tnconv_graph_parse(const char* json, tnconv_graph_t** out);
TNCONV_API tnconv_status_t tnconv_graph_named(const char* kind, const char* geometry,
                                              const char* ranks, tnconv_graph_t** out);
TNCONV_API tnconv_status_t tnconv_graph_to_json(const tnconv_graph_t* g, int pretty,
                                                char** out);
TNCONV_API tnconv_status_t tnconv_graph_with_geometry(const tnconv_graph_t* g,
                                                      const char* geometry,
                                                      tnconv_graph_t** out);
TNCONV_API tnconv_status_t tnconv_graph_canonical_hash(const tnconv_graph_t* g, char** out);
/* newline-separated violations; empty string when the graph is valid */
TNCONV_API tnconv_status_t tnconv_graph_validate(const tnconv_graph_t* g, char** violations);
/* 1 = nonredundant, 0 = redundant, -1 = error */
TNCONV_API int tnconv_graph_is_nonredundant(const tnconv_graph_t* g);
/* reduction to fixpoint; trace lines "rule: detail" joined by newlines */
TNCONV_API tnconv_status_t tnconv_graph_reduce(const tnconv_graph_t* g,
                                               tnconv_graph_t** reduced, char** trace);
TNCONV_API tnconv_status_t tnconv_graph_complexity(const tnconv_graph_t* g, int64_t* params,
                                                   uint64_t* flops);
TNCONV_API void tnconv_graph_free(tnconv_graph_t* g);

/* -- enumeration -------------------------------------------------------- */

/* Writes graphs.jsonl and summary.csv under out_dir (unless NULL) and
 * reports the number of nonredundant decompositions. filter is "3x3" or
 * "3x3x3"; geometry may be NULL for the documented reference geometry. */
TNCONV_API tnconv_status_t tnconv_enumerate(int spatial_dims, const char* filter,
                                            int max_rank_indices, int rank_dim,
                                            const char* geometry, uint64_t candidate_cap,
                                            int jobs, const char* out_dir,
                                            const char* file_header, uint64_t* count);

/* Counts under every redundancy-rule interpretation, as a text table. */
TNCONV_API tnconv_status_t tnconv_enumerate_variant_report(int spatial_dims,
                                                           const char* filter,
                                                           int max_rank_indices,
                                                           int rank_dim, char** report);

/* -- training ------------------------------------------------------------ */

/* net: preset name ("lenet-mini", "lenet-mini:cp:gamma=8", "synth-linear")
 * or literal network text (lines like "einconv standard 16"). graph_json may
 * supply an explicit layer structure applied to every einconv block.
 * Image/label paths name IDX files; the prefix "synth:" selects built-in
 * synthetic data ("synth:separable:N:SEED" or "synth:blobs:N:SIDE:K:SEED").
 * take > 0 trains on the first `take` samples only. Writes history.csv and
 * checkpoint.tnn under out_dir (unless NULL). */
TNCONV_API tnconv_status_t tnconv_train(const char* net, const char* graph_json,
                                        const char* train_images, const char* train_labels,
                                        const char* test_images, const char* test_labels,
                                        int64_t take, int64_t test_take,
                                        const char* config_toml, const char* out_dir,
                                        const char* file_header, double* final_train_acc,
                                        double* final_test_acc);

/* -- GA search ----------------------------------------------------------- */

/* Mutation-only NSGA-II over layer structures, objectives (validation
 * accuracy, parameter count). surrogate != 0 scores genomes analytically
 * instead of training (smoke mode). When train_images is NULL a built-in
 * synthetic task is used. Writes archive.csv, archive_graphs.jsonl,
 * pareto.jsonl and per-generation population snapshots under out_dir. */
TNCONV_API tnconv_status_t tnconv_search(const char* preset, int population, int generations,
                                         uint64_t seed, int jobs, int surrogate, int resume,
                                         const char* train_images, const char* train_labels,
                                         int64_t train_samples, int64_t val_samples,
                                         int64_t epochs_per_eval, const char* out_dir,
                                         const char* file_header, uint64_t* archive_size);

/* -- pareto -------------------------------------------------------------- */

/* keep[q] = 1 iff point q (accuracy maximized, params minimized) is not
 * dominated by any other point. */
TNCONV_API tnconv_status_t tnconv_pareto_filter(const double* accuracy, const double* params,
                                                size_t n, int* keep);

#ifdef __cplusplus
}
#endif

#endif /* TNCONV_H */
