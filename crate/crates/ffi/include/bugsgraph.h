#ifndef BUGSGRAPH_H
#define BUGSGRAPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_UTF8 = 2,
  /*
   Bad argument, unknown name or configuration problem.
   */
  BG_STATUS_USAGE = 3,
  /*
   The model failed to parse, build or initialize.
   */
  BG_STATUS_MODEL = 4,
  /*
   A numerical failure during computation.
   */
  BG_STATUS_NUMERIC = 5,
  /*
   The output buffer is too small; the required length was written.
   */
  BG_STATUS_BUFFER_TOO_SMALL = 6,
  /*
   An internal panic was caught at the boundary.
   */
  BG_STATUS_PANIC = 7,
} BgStatus;

/*
 A running MCMC chain. It owns a copy of the model it was built from.
 */
typedef struct BgMcmc BgMcmc;

/*
 An MCMC sampler configuration built against a model.
 */
typedef struct BgMcmcConfig BgMcmcConfig;

/*
 A model instance with its own values and random number generator.
 */
typedef struct BgModel BgModel;

/*
 A table of samples: one row per saved iteration.
 */
typedef struct BgSamples BgSamples;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *bg_last_error_message(void);

/*
 Library version as a static string.
 */
const char *bg_version(void);

/*
 Compiles `source` and creates a model. `constants`, `data` and `inits`
 are JSON objects of named arrays and may be NULL.

 # Safety
 String arguments must be NULL or NUL-terminated; `out` must be writable.
 */
enum BgStatus bg_model_new(const char *source,
                           const char *constants,
                           const char *data,
                           const char *inits,
                           uint64_t seed,
                           struct BgModel **out);

/*
 # Safety
 `model` must come from [`bg_model_new`] and not be used afterwards.
 */
void bg_model_free(struct BgModel *model);

/*
 Number of nodes in the model graph.

 # Safety
 `model` must be a live handle and `out` writable.
 */
enum BgStatus bg_model_node_count(const struct BgModel *model, size_t *out);

/*
 Recomputes the given nodes (all nodes when `nodes` is NULL) and writes
 the sum of their log probabilities.

 # Safety
 `model` must be a live handle, `nodes` NULL or a C string, `out` writable.
 */
enum BgStatus bg_model_calculate(struct BgModel *model, const char *nodes, double *out);

/*
 Sum of the stored log probabilities of the given nodes.

 # Safety
 As for [`bg_model_calculate`].
 */
enum BgStatus bg_model_get_log_prob(const struct BgModel *model, const char *nodes, double *out);

/*
 Draws new values for the given non-data nodes (all when NULL).

 # Safety
 As for [`bg_model_calculate`].
 */
enum BgStatus bg_model_simulate(struct BgModel *model, const char *nodes);

/*
 Copies the values of `spec` (e.g. `"theta[2:4]"`) into `buf`. The
 number of values is written to `out_len` even when `capacity` is too
 small.

 # Safety
 `buf` must hold `capacity` doubles; the other pointers must be valid.
 */
enum BgStatus bg_model_get_values(const struct BgModel *model,
                                  const char *spec,
                                  double *buf,
                                  size_t capacity,
                                  size_t *out_len);

/*
 Sets the values of `spec`; a single value is broadcast. Log
 probabilities are not recomputed.

 # Safety
 `values` must point to `len` doubles.
 */
enum BgStatus bg_model_set_values(struct BgModel *model,
                                  const char *spec,
                                  const double *values,
                                  size_t len);

/*
 Default configuration: one scalar random-walk sampler per unobserved
 stochastic node, monitoring the top-level variables.

 # Safety
 `model` must be a live handle and `out` writable.
 */
enum BgStatus bg_mcmc_config_new(const struct BgModel *model, struct BgMcmcConfig **out);

/*
 # Safety
 `config` must come from [`bg_mcmc_config_new`] and not be used afterwards.
 */
void bg_mcmc_config_free(struct BgMcmcConfig *config);

/*
 Adds a sampler of `kind` (`"RW"` or `"RW_block"`) on `targets` with
 default controls.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum BgStatus bg_mcmc_config_add_sampler(struct BgMcmcConfig *config,
                                         const char *kind,
                                         const char *targets);

/*
 Removes every sampler acting on `targets`.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum BgStatus bg_mcmc_config_remove_samplers(struct BgMcmcConfig *config, const char *targets);

/*
 Number of samplers in the configuration.

 # Safety
 `config` must be a live handle and `out` writable.
 */
enum BgStatus bg_mcmc_config_sampler_count(const struct BgMcmcConfig *config, size_t *out);

/*
 Replaces the monitored variables.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum BgStatus bg_mcmc_config_set_monitors(struct BgMcmcConfig *config, const char *variables);

/*
 Builds a chain from a copy of `model` and `config`.

 # Safety
 Handles must be live and `out` writable.
 */
enum BgStatus bg_mcmc_new(const struct BgModel *model,
                          const struct BgMcmcConfig *config,
                          struct BgMcmc **out);

/*
 # Safety
 `mcmc` must come from [`bg_mcmc_new`] and not be used afterwards.
 */
void bg_mcmc_free(struct BgMcmc *mcmc);

/*
 Runs `niter` iterations, keeping every `thin`-th one after `burnin`.
 The chain continues from where a previous run stopped.

 # Safety
 `mcmc` must be a live handle and `out` writable.
 */
enum BgStatus bg_mcmc_run(struct BgMcmc *mcmc,
                          size_t niter,
                          size_t burnin,
                          size_t thin,
                          struct BgSamples **out);

/*
 Acceptance rate of sampler `index` over all iterations so far.

 # Safety
 `mcmc` must be a live handle and `out` writable.
 */
enum BgStatus bg_mcmc_acceptance_rate(const struct BgMcmc *mcmc, size_t index, double *out);

/*
 # Safety
 `samples` must come from [`bg_mcmc_run`] and not be used afterwards.
 */
void bg_samples_free(struct BgSamples *samples);

/*
 # Safety
 `samples` must be a live handle and `out` writable.
 */
enum BgStatus bg_samples_rows(const struct BgSamples *samples, size_t *out);

/*
 Copies the column of element `name` (e.g. `"theta[3]"`) into `buf`.

 # Safety
 `buf` must hold `capacity` doubles; the other pointers must be valid.
 */
enum BgStatus bg_samples_column(const struct BgSamples *samples,
                                const char *name,
                                double *buf,
                                size_t capacity,
                                size_t *out_len);

/*
 Writes the samples as CSV with element names in the header.

 # Safety
 `samples` must be a live handle and `path` a C string.
 */
enum BgStatus bg_samples_write_csv(const struct BgSamples *samples, const char *path);

/*
 Runs Monte Carlo EM on a copy of `model` with default controls, taking
 the top-level nodes as parameters. Estimates are written in the order of
 the model's top-level nodes.

 # Safety
 `buf` must hold `capacity` doubles; the other pointers must be valid.
 */
enum BgStatus bg_mcem_run(const struct BgModel *model,
                          size_t max_iter,
                          double *buf,
                          size_t capacity,
                          size_t *out_len,
                          bool *out_converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BUGSGRAPH_H */
