#ifndef GRADSOC_H
#define GRADSOC_H

/* Generated by cbindgen from the gradsoc-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define GRADSOC_OK 0

#define GRADSOC_INFEASIBLE 2

#define GRADSOC_SOLVER_FAILURE 3

#define GRADSOC_BAD_INPUT 4

/**
 * Finished run handle (opaque).
 */
typedef struct GradsocRun GradsocRun;

/**
 * Scenario handle (opaque).
 */
typedef struct GradsocScenario GradsocScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be NULL with `cap` 0).
 */
uintptr_t gradsoc_last_error(char *buf, uintptr_t cap);

/**
 * Parses a scenario from its JSON form. Returns NULL on error.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
struct GradsocScenario *gradsoc_scenario_from_json(const char *json);

/**
 * Builds a built-in example scenario
 * (`four_tank`, `four_tank_modified`, `dynamic_four_tank`,
 * `wheel:<n>:<easy|hard>`). Returns NULL on error.
 *
 * # Safety
 * `name` must be a NUL-terminated string.
 */
struct GradsocScenario *gradsoc_scenario_example(const char *name);

/**
 * Serializes the scenario to JSON. Free with [`gradsoc_string_free`].
 *
 * # Safety
 * `sc` must be a live scenario handle.
 */
char *gradsoc_scenario_to_json(const struct GradsocScenario *sc);

/**
 * Switches the growth model (`"rc"`, `"rmx"`, `"rme"`), realigning the
 * growth-law parameters the way the command line does.
 *
 * # Safety
 * `sc` must be a live scenario handle; `kind` a NUL-terminated string.
 */
int32_t gradsoc_scenario_set_model(struct GradsocScenario *sc, const char *kind);

/**
 * # Safety
 * `sc` must come from this library and not have been freed.
 */
void gradsoc_scenario_free(struct GradsocScenario *sc);

/**
 * Runs a scenario in its natural mode (steady, design, or dynamic).
 * `out_dir` may be NULL to skip artifact files. Returns NULL only on
 * invalid arguments; solver trouble is reported through the exit code.
 *
 * # Safety
 * `sc` must be a live scenario handle; `out_dir` NULL or NUL-terminated.
 */
struct GradsocRun *gradsoc_run(const struct GradsocScenario *sc, const char *out_dir);

/**
 * # Safety
 * `run` must be a live run handle.
 */
int32_t gradsoc_run_exit_code(const struct GradsocRun *run);

/**
 * Objective value (NaN when the run produced none).
 *
 * # Safety
 * `run` must be a live run handle.
 */
double gradsoc_run_objective(const struct GradsocRun *run);

/**
 * Worst relative gap between kinetics and production (NaN when absent).
 *
 * # Safety
 * `run` must be a live run handle.
 */
double gradsoc_run_exactness(const struct GradsocRun *run);

/**
 * Status string ("optimal", "infeasible", ...). Free with
 * [`gradsoc_string_free`].
 *
 * # Safety
 * `run` must be a live run handle.
 */
char *gradsoc_run_status(const struct GradsocRun *run);

/**
 * One-line human summary. Free with [`gradsoc_string_free`].
 *
 * # Safety
 * `run` must be a live run handle.
 */
char *gradsoc_run_summary(const struct GradsocRun *run);

/**
 * Number of activated pipes of a design run.
 *
 * # Safety
 * `run` must be a live run handle.
 */
uintptr_t gradsoc_run_pipe_count(const struct GradsocRun *run);

/**
 * Endpoints (1-based) of the idx-th activated pipe.
 *
 * # Safety
 * `run` must be a live run handle; `from`/`to` must be writable.
 */
int32_t gradsoc_run_pipe(const struct GradsocRun *run, uintptr_t idx, uint32_t *from, uint32_t *to);

/**
 * # Safety
 * `run` must come from this library and not have been freed.
 */
void gradsoc_run_free(struct GradsocRun *run);

/**
 * # Safety
 * `s` must be a string returned by this library and not yet freed.
 */
void gradsoc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRADSOC_H */
