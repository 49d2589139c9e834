#ifndef RXNEMB_H
#define RXNEMB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum RxnembStatus {
  RXNEMB_STATUS_OK = 0,
  RXNEMB_STATUS_NULL_POINTER = 1,
  RXNEMB_STATUS_INVALID_UTF8 = 2,
  RXNEMB_STATUS_IO = 3,
  RXNEMB_STATUS_BAD_MODEL = 4,
  RXNEMB_STATUS_BAD_SMILES = 5,
  RXNEMB_STATUS_INFERENCE = 6,
  // The output buffer is too small; nothing was written.
  RXNEMB_STATUS_BUFFER_TOO_SMALL = 7,
  RXNEMB_STATUS_PANIC = 8,
} RxnembStatus;

// Loaded model. Opaque to C.
typedef struct RxnembModel RxnembModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a checkpoint file and stores a new handle in `*out`.
//
// # Safety
// `path` is a NUL-terminated string; `out` points to writable storage.
enum RxnembStatus rxnemb_model_load(const char *path, struct RxnembModel **out);

// Releases a handle. NULL is ignored.
//
// # Safety
// `model` came from [`rxnemb_model_load`] and is not used afterwards.
void rxnemb_model_free(struct RxnembModel *model);

// Length of the embedding vector, or 0 for a NULL handle.
//
// # Safety
// `model` is NULL or a live handle.
size_t rxnemb_model_emb_dim(const struct RxnembModel *model);

// Embeds a reaction SMILES into `out[0..len]`; `len` must be at least
// the model's embedding dimension.
//
// # Safety
// `model` is a live handle, `rxn_smiles` a NUL-terminated string, and
// `out` points to `len` writable floats.
enum RxnembStatus rxnemb_embed(const struct RxnembModel *model,
                               const char *rxn_smiles,
                               float *out,
                               size_t len);

// Probability in [0, 1] that the reaction is real, stored in `*p_real`.
//
// # Safety
// `model` is a live handle, `rxn_smiles` a NUL-terminated string, and
// `p_real` points to a writable double.
enum RxnembStatus rxnemb_classify(const struct RxnembModel *model,
                                  const char *rxn_smiles,
                                  double *p_real);

// Parses a reaction SMILES and writes it back from the parsed graphs as
// a NUL-terminated string. `*needed` (if non-NULL) receives the size
// including the terminator, so a first call with `cap = 0` sizes the
// buffer.
//
// # Safety
// `rxn_smiles` is a NUL-terminated string; `buf` points to `cap` writable
// bytes (or is NULL when `cap` is 0); `needed` is NULL or writable.
enum RxnembStatus rxnemb_write_smiles(const char *rxn_smiles,
                                      char *buf,
                                      size_t cap,
                                      size_t *needed);

// Message of the last failed call on this thread, or NULL after a
// success. Valid until the next call on the same thread.
const char *rxnemb_last_error(void);

// Library version as a static NUL-terminated string.
const char *rxnemb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RXNEMB_H */
