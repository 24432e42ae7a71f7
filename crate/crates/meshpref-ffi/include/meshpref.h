#ifndef MESHPREF_H
#define MESHPREF_H

/* Generated by cbindgen from the meshpref-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every FFI entry point.
typedef enum mp_status {
  MP_STATUS_OK = 0,
  // A required pointer argument was null.
  MP_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  MP_STATUS_INVALID_UTF8 = 2,
  // Malformed input data (OBJ, JSON, embedding shapes, bandwidth).
  MP_STATUS_INVALID_INPUT = 3,
  // The operation is well formed but failed on this input.
  MP_STATUS_OPERATION_FAILED = 4,
  // A panic was caught at the boundary; state may be stale.
  MP_STATUS_INTERNAL = 5,
} mp_status;

// Opaque triangle mesh handle.
typedef struct mp_mesh mp_mesh;

// Opaque reward-model parameter handle.
typedef struct mp_params mp_params;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the most recent error message on this thread into `buf`
// (NUL-terminated, truncated to `cap`). Returns the full message length.
size_t mp_last_error_message(char *buf, size_t cap);

// Parses Wavefront OBJ bytes into a mesh handle.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be a valid
// pointer. The returned handle must be released with `mp_mesh_free`.
enum mp_status mp_mesh_from_obj(const uint8_t *bytes, size_t len, struct mp_mesh **out);

// Serializes a mesh back to OBJ. The buffer is owned by the library and
// must be released with `mp_buffer_free`.
//
// # Safety
// All pointers must be valid; `mesh` must come from this library.
enum mp_status mp_mesh_to_obj(const struct mp_mesh *mesh, uint8_t **out_bytes, size_t *out_len);

// Releases a buffer returned by `mp_mesh_to_obj`.
//
// # Safety
// `bytes`/`len` must match a prior `mp_mesh_to_obj` result exactly.
void mp_buffer_free(uint8_t *bytes, size_t len);

// Releases a mesh handle. Null is a no-op.
//
// # Safety
// `mesh` must come from this library and not be used afterwards.
void mp_mesh_free(struct mp_mesh *mesh);

// # Safety
// `mesh` must be a valid handle.
size_t mp_mesh_face_count(const struct mp_mesh *mesh);

// # Safety
// `mesh` must be a valid handle.
size_t mp_mesh_vertex_count(const struct mp_mesh *mesh);

// Quadric edge-collapse simplification toward `target_faces`.
//
// # Safety
// `mesh` and `out` must be valid pointers.
enum mp_status mp_simplify(const struct mp_mesh *mesh, size_t target_faces, struct mp_mesh **out);

// Normal-similarity face fusion toward `target_faces`.
//
// # Safety
// `mesh` and `out` must be valid pointers.
enum mp_status mp_fuse(const struct mp_mesh *mesh,
                       double normal_similarity_threshold,
                       size_t target_faces,
                       size_t max_passes,
                       struct mp_mesh **out);

// Empirical Cauchy-Schwarz divergence between two row-major sample
// matrices of shape (`x_rows`, `dim`) and (`y_rows`, `dim`). A bandwidth
// of 0 or below selects the median heuristic. Writes the divergence and
// the bandwidth actually used.
//
// # Safety
// The data pointers must cover the stated shapes; out pointers must be
// valid.
enum mp_status mp_cs_divergence(const double *x_data,
                                size_t x_rows,
                                const double *y_data,
                                size_t y_rows,
                                size_t dim,
                                double bandwidth,
                                double *out_value,
                                double *out_bandwidth);

// Loads reward-model parameters from their JSON serialization.
//
// # Safety
// `bytes` must cover `len` bytes; `out` must be valid. Release the handle
// with `mp_params_free`.
enum mp_status mp_params_from_json(const uint8_t *bytes, size_t len, struct mp_params **out);

// Releases a parameter handle. Null is a no-op.
//
// # Safety
// `params` must come from this library and not be used afterwards.
void mp_params_free(struct mp_params *params);

// Scores a mesh against a NUL-terminated prompt.
//
// # Safety
// All pointers must be valid; `prompt` must be NUL-terminated.
enum mp_status mp_score(const struct mp_params *params,
                        const struct mp_mesh *mesh,
                        const char *prompt,
                        double *out_value);

// Reward-guided deformation: gradient descent on a quadratic anchor minus
// a linearly increasing multiple of the reward, over `steps` iterations.
//
// # Safety
// All pointers must be valid; `prompt` must be NUL-terminated.
enum mp_status mp_guide(const struct mp_params *params,
                        const struct mp_mesh *mesh,
                        const char *prompt,
                        size_t steps,
                        double alpha_start,
                        double alpha_end,
                        double learning_rate,
                        double anchor_weight,
                        struct mp_mesh **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHPREF_H */
