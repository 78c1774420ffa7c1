#ifndef HAR_C_API_H
#define HAR_C_API_H

/* C interface to the activity-recognition workbench. All functions return
 * a har_status; on failure har_last_error() describes what went wrong.
 * Strings returned through char** are heap-allocated and must be released
 * with har_string_free(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum har_status {
  HAR_OK = 0,
  HAR_ERR_CONFIG = 2,   /* invalid configuration or arguments */
  HAR_ERR_IO = 3,       /* missing/corrupt files, unwritable paths */
  HAR_ERR_NUMERIC = 4,  /* NaN/Inf, diverged training */
  HAR_ERR_CONTRACT = 5  /* API misuse (bad handles, shape violations) */
} har_status;

const char* har_version(void);

/* Message for the most recent failure on this thread; empty until one
 * occurs. The pointer stays valid until the next failing call. */
const char* har_last_error(void);

void har_string_free(char* s);

/* An experiment description: dataset source, preprocessing steps, model,
 * training settings, output directory, global seed. */
typedef struct har_config har_config;

har_status har_config_load(const char* path, har_config** out);
har_status har_config_parse(const char* json_text, har_config** out);
void har_config_free(har_config* config);

/* Resolved form with every default and derived seed materialized. */
har_status har_config_render(const har_config* config, char** json_out);

har_status har_config_set_output_dir(har_config* config, const char* dir);
/* Replaces the global seed and re-derives all component seeds that the
 * file left unset. */
har_status har_config_set_seed(har_config* config, uint64_t seed);

/* Commands mirror the CLI subcommands. Textual results (tables,
 * summaries) come back through the out parameter when it is non-NULL. */

har_status har_cmd_synth(const har_config* config, char** table_out);
har_status har_cmd_inspect(const char* dataset_dir, char** table_out);
har_status har_cmd_preprocess(const har_config* config, char** summary_out);
har_status har_cmd_train(const har_config* config, char** summary_out);
/* checkpoint_dir NULL or empty: <output_dir>/checkpoint. */
har_status har_cmd_eval(const har_config* config, const char* checkpoint_dir,
                        const char* split, char** summary_out);
/* use_f32 nonzero benchmarks the 32-bit engine. */
har_status har_cmd_bench(const har_config* config, size_t repetitions,
                         int use_f32, char** summary_out);
har_status har_cmd_compare(const char* metrics_a, const char* metrics_b,
                           char** table_out);

#ifdef __cplusplus
}
#endif

#endif /* HAR_C_API_H */
