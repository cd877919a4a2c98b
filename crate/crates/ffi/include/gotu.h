/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef GOTU_H
#define GOTU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes; the validation and numerical codes match the CLI exit codes.
 */
typedef enum GotuStatus {
  GOTU_STATUS_OK = 0,
  GOTU_STATUS_IO = 1,
  GOTU_STATUS_INVALID = 2,
  GOTU_STATUS_NUMERICAL = 3,
  GOTU_STATUS_NULL_POINTER = 4,
  GOTU_STATUS_PANIC = 5,
} GotuStatus;

/*
 Opaque run output; row labels stay valid until the handle is freed.
 */
typedef struct GotuResult GotuResult;

/*
 Opaque experiment specification.
 */
typedef struct GotuSpec GotuSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. Owned by the library.
 */
const char *gotu_last_error(void);

/*
 Library version as a static string.
 */
const char *gotu_version(void);

/*
 Creates the spec of a named preset.

 # Safety
 `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum GotuStatus gotu_spec_from_preset(const char *name, struct GotuSpec **out);

/*
 Parses a key-value config (or a JSON spec export) into a spec.

 # Safety
 `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum GotuStatus gotu_spec_from_config(const char *text, struct GotuSpec **out);

/*
 Overrides seed, repetitions, width and sample count; zero keeps the
 current repetitions, width or samples.

 # Safety
 `spec` must come from a `gotu_spec_*` constructor.
 */
enum GotuStatus gotu_spec_configure(struct GotuSpec *spec,
                                    uint64_t seed,
                                    size_t repetitions,
                                    size_t width,
                                    size_t samples);

/*
 JSON form of the spec; release it with [`gotu_string_free`].

 # Safety
 `spec` must be a live handle and `out` a valid pointer.
 */
enum GotuStatus gotu_spec_to_json(const struct GotuSpec *spec, char **out);

/*
 # Safety
 `spec` must be null or a handle not yet freed.
 */
void gotu_spec_free(struct GotuSpec *spec);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void gotu_string_free(char *s);

/*
 Runs the experiment.

 # Safety
 `spec` must be a live handle and `out` a valid pointer.
 */
enum GotuStatus gotu_run(const struct GotuSpec *spec, struct GotuResult **out);

/*
 Number of result rows, or zero for a null handle.

 # Safety
 `result` must be null or a live handle.
 */
size_t gotu_result_rows(const struct GotuResult *result);

/*
 Row `i`: label (owned by the result), mean, std (NaN with one
 repetition) and readout standard error.

 # Safety
 `result` must be a live handle; the out pointers must be valid.
 */
enum GotuStatus gotu_result_row(const struct GotuResult *result,
                                size_t i,
                                const char **label,
                                double *mean,
                                double *std,
                                double *stderr);

/*
 Writes `results.csv`, `spec.json` and the traces into `dir`.

 # Safety
 `result` must be a live handle and `dir` a nul-terminated path.
 */
enum GotuStatus gotu_result_write(const struct GotuResult *result, const char *dir);

/*
 # Safety
 `result` must be null or a handle not yet freed.
 */
void gotu_result_free(struct GotuResult *result);

/*
 Minimizer `(ĝ(0), ĝ(e₁), ĝ(2e₁))` of the leading-order `(1+x)²` sparse
 quadratic form for the constant target seen on `x₁ = 1`.

 # Safety
 `out` must point to three writable doubles.
 */
enum GotuStatus gotu_example1_asymptotic(size_t d, double *out);

/*
 Entries `(x, y, z, t)` of the inverse sparse `(1+x)²` kernel on the block
 spanned by `{2eᵢ} ∪ {0}`: `x` on the `2eᵢ` diagonal, `y` between `2eᵢ` and
 `2eⱼ`, `z` between `2eᵢ` and `0`, `t` at `0`.

 # Safety
 `out` must point to four writable doubles.
 */
enum GotuStatus gotu_prop1_inverse_block(size_t d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GOTU_H */
