#ifndef IVF_RABITQ_H
#define IVF_RABITQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IvrqIpMode {
  IVRQ_IP_MODE_LUT = 0,
  IVRQ_IP_MODE_BITWISE = 1,
} IvrqIpMode;

typedef enum IvrqStatus {
  IVRQ_STATUS_OK = 0,
  IVRQ_STATUS_INVALID_ARGUMENT = 1,
  IVRQ_STATUS_DIMENSION_MISMATCH = 2,
  IVRQ_STATUS_FORMAT = 3,
  IVRQ_STATUS_IO = 4,
  IVRQ_STATUS_NULL_POINTER = 5,
  IVRQ_STATUS_PANIC = 6,
} IvrqStatus;

// Opaque index handle.
typedef struct IvrqIndex IvrqIndex;

typedef struct IvrqBuildParams {
  // Number of clusters; 0 picks ceil(sqrt(rows)).
  size_t n_clusters;
  size_t kmeans_iters;
  double train_fraction;
  // Bits per dimension, 1 to 8.
  uint8_t bits;
  float c_eps;
  uint64_t seed;
} IvrqBuildParams;

typedef struct IvrqSearchParams {
  size_t k;
  size_t n_probe;
  enum IvrqIpMode ip_mode;
  // Query bits in bitwise mode, 2 to 8.
  uint8_t query_bits;
  bool refine;
} IvrqSearchParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

struct IvrqBuildParams ivrq_build_params_default(void);

struct IvrqSearchParams ivrq_search_params_default(void);

// Builds an index over `rows` row-major vectors of `dims` floats. Row `i`
// gets id `i`. `params` may be null for defaults.
//
// # Safety
// `data` must point to `rows * dims` floats and `out` to writable storage
// for one pointer. `params`, if not null, must point to a valid struct.
enum IvrqStatus ivrq_index_build(const float *data,
                                 size_t rows,
                                 size_t dims,
                                 const struct IvrqBuildParams *params,
                                 struct IvrqIndex **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum IvrqStatus ivrq_index_load(const char *path, struct IvrqIndex **out);

// # Safety
// `index` must come from this library and `path` be NUL-terminated.
enum IvrqStatus ivrq_index_save(const struct IvrqIndex *index, const char *path);

// Releases an index. Null is ignored.
//
// # Safety
// `index` must come from this library and not be used afterwards.
void ivrq_index_free(struct IvrqIndex *index);

// Vector dimension, or 0 for a null index.
//
// # Safety
// `index` must be null or come from this library.
size_t ivrq_index_dims(const struct IvrqIndex *index);

// Number of indexed vectors, or 0 for a null index.
//
// # Safety
// `index` must be null or come from this library.
size_t ivrq_index_len(const struct IvrqIndex *index);

// Bits per dimension, or 0 for a null index.
//
// # Safety
// `index` must be null or come from this library.
uint8_t ivrq_index_bits(const struct IvrqIndex *index);

// Number of clusters, or 0 for a null index.
//
// # Safety
// `index` must be null or come from this library.
size_t ivrq_index_n_clusters(const struct IvrqIndex *index);

// Searches `n_queries` row-major queries. Writes `n_queries * k` ids and
// estimated squared distances, ascending per query. Rows with fewer than
// `k` results are padded with id -1 and distance +inf.
//
// # Safety
// `queries` must hold `n_queries * dims` floats, `ids` and `dists` must
// each have room for `n_queries * params->k` elements.
enum IvrqStatus ivrq_index_search(const struct IvrqIndex *index,
                                  const float *queries,
                                  size_t n_queries,
                                  size_t dims,
                                  const struct IvrqSearchParams *params,
                                  int64_t *ids,
                                  float *dists);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *ivrq_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVF_RABITQ_H */
