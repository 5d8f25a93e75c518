#ifndef ZOR_H
#define ZOR_H

/* This file is generated by cbindgen from zor-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every C-ABI call.
typedef enum {
  // The call succeeded.
  ZOR_STATUS_OK = 0,
  // A required pointer argument was null.
  ZOR_STATUS_NULL_POINTER = 1,
  // A parameter value is out of its supported range.
  ZOR_STATUS_INVALID_ARGUMENT = 2,
  // Construction failed (auxiliary retries exhausted).
  ZOR_STATUS_BUILD_FAILED = 3,
  // Serialized filter data is malformed or truncated.
  ZOR_STATUS_FORMAT_ERROR = 4,
  // The library caught an internal panic instead of unwinding into C.
  ZOR_STATUS_INTERNAL_PANIC = 5,
} ZorStatus;

// Opaque filter handle.
typedef struct ZorFilter ZorFilter;

// Build-time knobs. Zero-initialise and fill, or start from
// `zor_params_default`. A zero `segment_len`, `aux_bits` or
// `cascade_bits` selects the built-in default.
typedef struct {
  // Main fingerprint bits (1..=32).
  uint32_t fingerprint_bits;
  // Hash locations per key (2..=8).
  uint32_t arity;
  // Main-table segment length (power of two), or 0 to size from n.
  uint32_t segment_len;
  // Seed for cell locations and fingerprints.
  uint64_t filter_seed;
  // Seed for key digesting.
  uint64_t key_seed;
  // Intervention policy: 0 random, 1 lightest, 2 heaviest, 3 most-deg2,
  // 4 min-max-degree.
  uint32_t policy;
  // Minimal-degree cells examined per blocking event (>= 1).
  uint32_t scan_budget;
  // Abandoned-key handling: 0 none (pure ZOR), 1 fuse, 2 cascade.
  uint32_t aux_mode;
  // Auxiliary fingerprint bits, or 0 for fingerprint_bits + 8.
  uint32_t aux_bits;
  // Cascade final-stage bits, or 0 for aux_bits + 8.
  uint32_t cascade_bits;
} ZorBuildParams;

// Read-only build statistics of a filter.
typedef struct {
  // Distinct keys the filter was built over.
  uint64_t key_count;
  // Keys abandoned during peeling.
  uint64_t abandoned;
  // Abandoned keys covered by the auxiliary stage.
  uint64_t aux_stored;
  // abandoned / key_count.
  double alpha;
  // Payload bits per key (0 for an empty filter).
  double bits_per_key;
  // Analytic combined false-positive rate.
  double epsilon_tot;
} ZorStats;

// Fills `params` with the default configuration (16-bit fingerprints,
// 5-wise, fuse auxiliary).
//
// # Safety
// `params` must be valid for writes (or null, which is reported).
ZorStatus zor_params_default(ZorBuildParams *params);

// Builds a filter over `key_count` byte-sequence keys. `keys[i]` points
// at `key_lens[i]` bytes (a null pointer is allowed for zero-length
// keys). On success `*out` owns the filter; release it with
// `zor_filter_free`.
//
// # Safety
// `keys` and `key_lens` must be valid for `key_count` reads and each
// `keys[i]` readable for `key_lens[i]` bytes.
ZorStatus zor_filter_build(const uint8_t *const *keys,
                           const size_t *key_lens,
                           size_t key_count,
                           const ZorBuildParams *params,
                           ZorFilter **out);

// Membership test: sets `*found` to true when the key is (probably) in
// the set, false when it is definitely not.
//
// # Safety
// `key` must be readable for `key_len` bytes (null allowed when
// `key_len` is 0).
ZorStatus zor_filter_contains(const ZorFilter *filter,
                              const uint8_t *key,
                              size_t key_len,
                              bool *found);

// Copies the filter's build statistics into `*stats`.
//
// # Safety
// `filter` must be a live handle from this library and `stats` valid for
// writes (either may be null, which is reported).
ZorStatus zor_filter_stats(const ZorFilter *filter, ZorStats *stats);

// Serializes the filter. On success `*bytes` points at `*len` bytes owned
// by the library; release them with `zor_bytes_free`.
//
// # Safety
// `filter` must be a live handle from this library; `bytes` and `len`
// must be valid for writes.
ZorStatus zor_filter_serialize(const ZorFilter *filter, uint8_t **bytes, size_t *len);

// Decodes a serialized filter. On success `*out` owns the new handle.
//
// # Safety
// `bytes` must be readable for `len` bytes.
ZorStatus zor_filter_deserialize(const uint8_t *bytes, size_t len, ZorFilter **out);

// Releases a filter handle. Null is a no-op.
//
// # Safety
// `filter` must be null or a handle obtained from this library that has
// not been freed yet.
void zor_filter_free(ZorFilter *filter);

// Releases a byte buffer returned by `zor_filter_serialize`. The length
// must be the one the library reported. Null is a no-op.
//
// # Safety
// `bytes` must be null or exactly the (pointer, length) pair returned by
// `zor_filter_serialize`, freed at most once.
void zor_bytes_free(uint8_t *bytes, size_t len);

// Static description of a status code.
const char *zor_status_message(ZorStatus status);

#endif /* ZOR_H */
