/* C interface to the citation attribution evaluation library.
 *
 * Every function returning citeval_status records a message retrievable with
 * citeval_last_error() on the calling thread. Strings returned through
 * `const char**` out-parameters are owned by the handle they came from and
 * stay valid until that handle is freed or modified.
 */
#ifndef CITEVAL_H
#define CITEVAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CITEVAL_API __declspec(dllexport)
#else
#define CITEVAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum citeval_status {
  CITEVAL_OK = 0,
  CITEVAL_E_INVALID_ARGUMENT = 1,
  CITEVAL_E_FILE_MISSING = 2,
  CITEVAL_E_MALFORMED_DOCUMENT = 3,
  CITEVAL_E_SCHEMA_VIOLATION = 4,
  CITEVAL_E_EMPTY_CORPUS = 5,
  CITEVAL_E_AUTH_FAILURE = 6,
  CITEVAL_E_RATE_LIMITED = 7,
  CITEVAL_E_TIMEOUT = 8,
  CITEVAL_E_UNREACHABLE = 9,
  CITEVAL_E_EXHAUSTED_RETRIES = 10,
  CITEVAL_E_MALFORMED_RESPONSE = 11,
  CITEVAL_E_DIMENSION_MISMATCH = 12,
  CITEVAL_E_EMBEDDER_FAILURE = 13,
  CITEVAL_E_RERANKER_UNAVAILABLE = 14,
  CITEVAL_E_UNDEFINED_METRIC = 15,
  CITEVAL_E_INSUFFICIENT_RECORDS = 16,
  CITEVAL_E_CONFIG_INVALID = 17,
  CITEVAL_E_LOCKED = 18,
  CITEVAL_E_TAMPERED = 19,
  CITEVAL_E_NO_RESULTS = 20,
  CITEVAL_E_IO = 21,
  CITEVAL_E_INTERNAL = 99
} citeval_status;

typedef struct citeval_corpus citeval_corpus;
typedef struct citeval_config citeval_config;
typedef struct citeval_text citeval_text;

/* -- General ---------------------------------------------------------------- */

CITEVAL_API const char* citeval_version(void);
CITEVAL_API const char* citeval_status_name(citeval_status status);
/* Message of the last failing call on this thread; "" after success. */
CITEVAL_API const char* citeval_last_error(void);
/* 0 trace, 1 debug, 2 info, 3 warn, 4 error, 5 critical, 6 off. */
CITEVAL_API citeval_status citeval_set_log_level(int level);

/* -- Text results ----------------------------------------------------------- */

CITEVAL_API const char* citeval_text_data(const citeval_text* text);
CITEVAL_API size_t citeval_text_size(const citeval_text* text);
CITEVAL_API void citeval_text_free(citeval_text* text);

/* -- Corpus ----------------------------------------------------------------- */

/* `domains` is a comma-separated list, "*" for any category, or NULL for the
 * twelve default domains. */
CITEVAL_API citeval_status citeval_corpus_load(const char* path, int strict, const char* domains,
                                               citeval_corpus** out);
CITEVAL_API void citeval_corpus_free(citeval_corpus* corpus);
CITEVAL_API size_t citeval_corpus_size(const citeval_corpus* corpus);
CITEVAL_API size_t citeval_corpus_raw_count(const citeval_corpus* corpus);
CITEVAL_API size_t citeval_corpus_dropped(const citeval_corpus* corpus);
CITEVAL_API const char* citeval_corpus_hash(const citeval_corpus* corpus);
CITEVAL_API size_t citeval_corpus_warning_count(const citeval_corpus* corpus);
CITEVAL_API const char* citeval_corpus_warning(const citeval_corpus* corpus, size_t i);
CITEVAL_API size_t citeval_corpus_domain_count(const citeval_corpus* corpus);
CITEVAL_API const char* citeval_corpus_domain_name(const citeval_corpus* corpus, size_t i);
CITEVAL_API size_t citeval_corpus_domain_size(const citeval_corpus* corpus, size_t i);

/* -- Adversarial sets ------------------------------------------------------- */

typedef struct citeval_adversarial_options {
  size_t n;
  const char* field; /* "title" or "abstract" */
  uint64_t seed;
  double threshold;
  int stratify_by_domain;
  int casefold;
} citeval_adversarial_options;

CITEVAL_API void citeval_adversarial_options_init(citeval_adversarial_options* options);
/* Writes the perturbed set as JSON to `out_path`. On
 * CITEVAL_E_INSUFFICIENT_RECORDS, *achievable (if non-NULL) holds the number
 * of perturbable records found. */
CITEVAL_API citeval_status citeval_adversarial_build(const citeval_corpus* corpus,
                                                     const citeval_adversarial_options* options,
                                                     const char* out_path, size_t* achievable);

/* -- Experiment configuration ------------------------------------------------ */

CITEVAL_API citeval_status citeval_config_new(citeval_config** out);
CITEVAL_API void citeval_config_free(citeval_config* config);
/* Applies a key = value file on top of the current values. */
CITEVAL_API citeval_status citeval_config_load_file(citeval_config* config, const char* path);
CITEVAL_API citeval_status citeval_config_set(citeval_config* config, const char* key,
                                              const char* value);
CITEVAL_API citeval_status citeval_config_get(citeval_config* config, const char* key,
                                              const char** value);
CITEVAL_API citeval_status citeval_config_validate(const citeval_config* config);
CITEVAL_API size_t citeval_config_key_count(void);
CITEVAL_API const char* citeval_config_key_name(size_t i);

/* -- Runs ------------------------------------------------------------------- */

typedef struct citeval_run_summary {
  size_t executed;
  size_t skipped;
  size_t failed;
  size_t rows;
} citeval_run_summary;

/* Replaces the chat endpoint. Return 0 and set *completion (valid until the
 * next call on the same thread) to answer; a non-zero return is treated as
 * an HTTP status from the endpoint. Called from several threads at once
 * when the config's concurrency is above 1. */
typedef int (*citeval_completion_fn)(void* user, const char* prompt, const char** completion);

CITEVAL_API citeval_status citeval_run(const citeval_config* config, citeval_run_summary* summary);
CITEVAL_API citeval_status citeval_run_with_completer(const citeval_config* config,
                                                      citeval_completion_fn completer,
                                                      void* user, citeval_run_summary* summary);
CITEVAL_API citeval_status citeval_verify_run(const char* output_dir, size_t* rows);

/* -- Reports ---------------------------------------------------------------- */

/* pass_handling: 0 exclude, 1 include. std_convention: 0 sample, 1 population. */
CITEVAL_API citeval_status citeval_report(const char* results_dir, int pass_handling,
                                          int std_convention, citeval_text** csv,
                                          citeval_text** text);
/* `prices_path` may be NULL. */
CITEVAL_API citeval_status citeval_cost_summary(const char* results_dir, const char* prices_path,
                                                citeval_text** out);

#ifdef __cplusplus
}
#endif

#endif /* CITEVAL_H */
