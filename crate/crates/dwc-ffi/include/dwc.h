#ifndef DWC_H
#define DWC_H

/* Generated by cbindgen from the dwc-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible FFI call.
typedef enum DwcStatus {
  DWC_STATUS_OK = 0,
  // A required pointer argument was null.
  DWC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  DWC_STATUS_INVALID_UTF8 = 2,
  // A document failed to parse or validate.
  DWC_STATUS_PARSE = 3,
  // A buffer or history had the wrong length.
  DWC_STATUS_DIMENSION = 4,
  DWC_STATUS_IO = 5,
  DWC_STATUS_INTERNAL = 6,
} DwcStatus;

// Opaque field-simulator handle with its measurement grid resolved.
typedef struct DwcField DwcField;

// Opaque trained-model handle.
typedef struct DwcPredictor DwcPredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *dwc_last_error_message(void);

// Library version as a static string.
const char *dwc_version(void);

// Loads a model checkpoint from a JSON file.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
// A non-null result handle must be released with [`dwc_predictor_free`].
enum DwcStatus dwc_predictor_load_file(const char *path, struct DwcPredictor **out);

// Parses a model checkpoint from a JSON document in memory.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum DwcStatus dwc_predictor_from_json(const char *json, struct DwcPredictor **out);

// Number of history steps one prediction consumes.
//
// # Safety
// `predictor` must be a live handle from a `dwc_predictor_*` constructor.
size_t dwc_predictor_lookback(const struct DwcPredictor *predictor);

// Predicts the next peak position from a measurement history.
//
// `history` holds `lookback` rows of 4 doubles each, row-major, in raw
// units: time-step index, strength (A/m), point x (m), point y (m).
// `len` is the total number of doubles. The predicted coordinates are
// written to `out_x` and `out_y` in meters.
//
// # Safety
// `predictor` must be a live handle; `history` must point to `len`
// readable doubles; `out_x` and `out_y` must be valid pointers.
enum DwcStatus dwc_predictor_predict(const struct DwcPredictor *predictor,
                                     const double *history,
                                     size_t len,
                                     double *out_x,
                                     double *out_y);

// Releases a predictor handle. Null is a no-op.
//
// # Safety
// `predictor` must be null or a handle not yet freed.
void dwc_predictor_free(struct DwcPredictor *predictor);

// Creates a field simulator from a field-config JSON document.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
// A non-null result handle must be released with [`dwc_field_free`].
enum DwcStatus dwc_field_from_json(const char *json, struct DwcField **out);

// Creates a field simulator with the built-in default configuration.
//
// # Safety
// `out` must be a valid pointer.
enum DwcStatus dwc_field_default(struct DwcField **out);

// Number of measurement points on the field's grid.
//
// # Safety
// `field` must be a live handle from a `dwc_field_*` constructor.
size_t dwc_field_n_points(const struct DwcField *field);

// Copies the grid coordinates as interleaved `(x, y)` pairs.
//
// `cap` is the capacity of `out_xy` in doubles and must be at least
// `2 * n_points`.
//
// # Safety
// `field` must be a live handle; `out_xy` must point to `cap` writable
// doubles.
enum DwcStatus dwc_field_points(const struct DwcField *field, double *out_xy, size_t cap);

// Measures every grid point at time `t` (seconds) into `out_strengths`.
//
// `cap` is the capacity of `out_strengths` in doubles and must be at
// least `n_points`.
//
// # Safety
// `field` must be a live handle; `out_strengths` must point to `cap`
// writable doubles.
enum DwcStatus dwc_field_sample(const struct DwcField *field,
                                double t,
                                double *out_strengths,
                                size_t cap);

// Index and strength of the strongest grid point at time `t`.
//
// # Safety
// `field` must be a live handle; `out_index` and `out_strength` must be
// valid pointers.
enum DwcStatus dwc_field_argmax(const struct DwcField *field,
                                double t,
                                size_t *out_index,
                                double *out_strength);

// Releases a field handle. Null is a no-op.
//
// # Safety
// `field` must be null or a handle not yet freed.
void dwc_field_free(struct DwcField *field);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DWC_H */
