/*
 * spot.h - C interface to the spotkit pipeline.
 *
 * The library is driven through an opaque context created from a JSON
 * configuration document. Every function returns a status code; the last
 * failure message is kept on the context. Strings returned through output
 * parameters are heap-allocated and must be released with spot_string_free.
 */

#ifndef SPOT_H
#define SPOT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SPOT_API __declspec(dllexport)
#else
#define SPOT_API __attribute__((visibility("default")))
#endif

typedef enum spot_status {
    SPOT_OK = 0,
    SPOT_ERR_INVALID_ARGUMENT = 1,
    SPOT_ERR_IO = 2,
    SPOT_ERR_PARSE = 3,
    SPOT_ERR_MISSING_PREREQUISITE = 4,
    SPOT_ERR_NUMERIC = 5,
    SPOT_ERR_INTERNAL = 6
} spot_status;

typedef struct spot_context spot_context;

SPOT_API const char* spot_version(void);

/* Context lifecycle. config_json may be NULL or "" for defaults. */
SPOT_API spot_status spot_context_create(const char* config_json, spot_context** out_ctx);
SPOT_API spot_status spot_context_create_from_file(const char* config_path,
                                                   spot_context** out_ctx);
SPOT_API void spot_context_free(spot_context* ctx);

/* Message describing the most recent failure on this context. */
SPOT_API const char* spot_context_last_error(const spot_context* ctx);

/* Overrides one configuration entry; key is dot-separated
 * (e.g. "stage1.epochs"), value is a JSON literal (e.g. "5" or "\"path\""). */
SPOT_API spot_status spot_context_set(spot_context* ctx, const char* dotted_key,
                                      const char* value_json);

/* Effective configuration as a JSON document. */
SPOT_API spot_status spot_context_config(const spot_context* ctx, char** out_json);

/* Pipeline commands. Each writes its artifacts (atomically, with a manifest
 * of input digests) and returns a JSON summary. */
SPOT_API spot_status spot_cmd_gen_corpus(spot_context* ctx, char** out_json);
SPOT_API spot_status spot_cmd_build_data(spot_context* ctx, char** out_json);
SPOT_API spot_status spot_cmd_train_stage1(spot_context* ctx, char** out_json);
SPOT_API spot_status spot_cmd_train_stage2(spot_context* ctx, char** out_json);
/* question == NULL runs batch inference over the evaluation set. */
SPOT_API spot_status spot_cmd_infer(spot_context* ctx, const char* question, char** out_json);
SPOT_API spot_status spot_cmd_coverage(spot_context* ctx, char** out_json);
SPOT_API spot_status spot_cmd_judge(spot_context* ctx, char** out_json);
SPOT_API spot_status spot_cmd_eval(spot_context* ctx, char** out_json);

/* Entropic OT value with epsilon-scaling over a dense row-major cost
 * matrix. a (length m) and b (length n) may be NULL for uniform marginals.
 * out_plan, when non-NULL, receives the m*n coupling (row-major). */
SPOT_API spot_status spot_sinkhorn_value(const double* cost, size_t m, size_t n,
                                         const double* a, const double* b, double blur,
                                         double scaling, int inner_iters, double delta,
                                         double* out_value, double* out_epsilon_final,
                                         double* out_plan);

/* Blank-line span segmentation of UTF-8 text; returns a JSON array of
 * {index, begin, end, text}. */
SPOT_API spot_status spot_segment_spans(const char* text, char** out_json);

SPOT_API void spot_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* SPOT_H */
