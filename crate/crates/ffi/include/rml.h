#ifndef RML_H
#define RML_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmlErrorCode {
  RML_ERROR_CODE_OK = 0,
  RML_ERROR_CODE_NULL_POINTER = 1,
  RML_ERROR_CODE_INVALID_UTF8 = 2,
  /**
   * The program text does not parse.
   */
  RML_ERROR_CODE_PARSE = 3,
  /**
   * The program parses but breaks a language rule.
   */
  RML_ERROR_CODE_INVALID_PROGRAM = 4,
  RML_ERROR_CODE_COMPILE = 5,
  RML_ERROR_CODE_UNKNOWN_CHANNEL = 6,
  /**
   * Wrong number of values or cells.
   */
  RML_ERROR_CODE_SHAPE = 7,
  /**
   * A weight vector is negative, non-finite or does not sum to one.
   */
  RML_ERROR_CODE_INVALID_WEIGHTS = 8,
  /**
   * Some source has never been set, so there is no landscape yet.
   */
  RML_ERROR_CODE_NOT_READY = 9,
  RML_ERROR_CODE_OUT_OF_RANGE = 10,
  RML_ERROR_CODE_PANIC = 11,
} RmlErrorCode;

/**
 * A reactive landscape over a fixed number of cells.
 */
typedef struct RmlEngine RmlEngine;

/**
 * A validated, compiled program.
 */
typedef struct RmlProgram RmlProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call on this thread.
 */
const char *rml_last_error(void);

/**
 * Parses, validates and compiles `text`. Free the result with
 * [`rml_program_free`].
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum RmlErrorCode rml_program_parse(const char *text, struct RmlProgram **out);

/**
 * # Safety
 * `program` must come from [`rml_program_parse`] and not be used again.
 */
void rml_program_free(struct RmlProgram *program);

/**
 * Number of world variables, one per source the target depends on.
 *
 * # Safety
 * `program` must be null or a live program.
 */
size_t rml_program_variable_count(const struct RmlProgram *program);

/**
 * Channel token and arity of variable `index`. The string lives as long as
 * the program.
 *
 * # Safety
 * `program` must be a live program; `channel` and `arity` valid pointers.
 */
enum RmlErrorCode rml_program_variable(const struct RmlProgram *program,
                                       size_t index,
                                       const char **channel,
                                       size_t *arity);

/**
 * Scalar operations for one full evaluation of one cell.
 *
 * # Safety
 * `program` must be null or a live program.
 */
uint64_t rml_program_omega(const struct RmlProgram *program);

/**
 * A reactive landscape over `cells` cells, all sources in cluster 0. The
 * engine keeps its own copy of the program.
 *
 * # Safety
 * `program` must be a live program and `out` a valid pointer.
 */
enum RmlErrorCode rml_engine_new(const struct RmlProgram *program,
                                 size_t cells,
                                 double epsilon,
                                 struct RmlEngine **out);

/**
 * # Safety
 * `engine` must come from [`rml_engine_new`] and not be used again.
 */
void rml_engine_free(struct RmlEngine *engine);

/**
 * New weights for the listed cells of one channel: `values` holds one
 * vector of the channel's arity per cell. Pass `cells = NULL` and
 * `n_cells = 0` to set every cell. `ops` and `skipped`, when not null,
 * receive the work done and whether the update was dropped as not
 * meaningful.
 *
 * # Safety
 * Pointers must be valid for the given lengths; `ops` and `skipped` may be
 * null.
 */
enum RmlErrorCode rml_engine_update(struct RmlEngine *engine,
                                    const char *channel,
                                    const size_t *cells,
                                    size_t n_cells,
                                    const double *values,
                                    size_t n_values,
                                    uint64_t *ops,
                                    bool *skipped);

/**
 * Moves one channel to another FoC cluster and re-cuts the circuit.
 *
 * # Safety
 * `engine` must be a live engine and `channel` a nul-terminated string.
 */
enum RmlErrorCode rml_engine_set_cluster(struct RmlEngine *engine,
                                         const char *channel,
                                         size_t cluster);

/**
 * Copies the landscape, one probability per cell, into `out`.
 *
 * # Safety
 * `engine` must be a live engine and `out` valid for `len` doubles.
 */
enum RmlErrorCode rml_engine_landscape(const struct RmlEngine *engine, double *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RML_H */
