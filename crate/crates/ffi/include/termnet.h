#ifndef TERMNET_H
#define TERMNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum TnStatus {
  TN_STATUS_OK = 0,
  TN_STATUS_NULL_ARGUMENT = 1,
  TN_STATUS_INVALID_UTF8 = 2,
  TN_STATUS_PARSE = 3,
  TN_STATUS_UNKNOWN_VARIABLE = 4,
  TN_STATUS_UNKNOWN_VALUE = 5,
  TN_STATUS_CONFLICT = 6,
  TN_STATUS_INVALID_ARGUMENT = 7,
  TN_STATUS_IO = 8,
  TN_STATUS_BUFFER_TOO_SMALL = 9,
  TN_STATUS_PANIC = 10,
} TnStatus;

/*
 Opaque session handle.
 */
typedef struct TnSession TnSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses a network in the text format and opens a session on it.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TnStatus tn_session_new_from_text(const char *text, struct TnSession **out);

/*
 Loads a network file and opens a session on it.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TnStatus tn_session_new_from_file(const char *path, struct TnSession **out);

/*
 Releases a session. Null is ignored.

 # Safety
 `s` must come from one of the constructors and not be used afterwards.
 */
void tn_session_free(struct TnSession *s);

/*
 Registers a marginal query over comma-separated variable names.

 # Safety
 Pointers must be valid; `vars` NUL-terminated.
 */
enum TnStatus tn_session_query(struct TnSession *s, const char *vars, size_t *out_query);

/*
 Observes `var = value`.

 # Safety
 Pointers must be valid and NUL-terminated.
 */
enum TnStatus tn_session_evidence(struct TnSession *s, const char *var, const char *value);

/*
 Runs up to `k` more steps of a query; `out_done` receives how many
 produced a term (fewer once the query is exhausted).

 # Safety
 Pointers must be valid; `out_done` may be null.
 */
enum TnStatus tn_session_step(struct TnSession *s, size_t query, size_t k, size_t *out_done);

/*
 Writes per-value brackets in value order: query variables in network
 order, last one fastest.
 `out_count` receives the number of values; if it exceeds `cap` nothing is
 written and `BufferTooSmall` is returned.

 # Safety
 `lowers` and `uppers` must have room for `cap` doubles.
 */
enum TnStatus tn_session_bounds(struct TnSession *s,
                                size_t query,
                                double *lowers,
                                double *uppers,
                                size_t cap,
                                size_t *out_count);

/*
 Most likely joint assignment of `vars` given the evidence, creating at
 most `budget` terms. `out_found` is 0 when the budget ran out first;
 otherwise the assignment is written as `A=a,B=b` and its mass stored.

 # Safety
 Pointers must be valid; `buf` must hold `cap` bytes.
 */
enum TnStatus tn_session_mlch(struct TnSession *s,
                              const char *vars,
                              size_t budget,
                              int32_t *out_found,
                              double *out_mass,
                              char *buf,
                              size_t cap,
                              size_t *out_len);

/*
 Total terms created by the session so far.

 # Safety
 `s` must be a valid session or null (returns 0).
 */
size_t tn_session_terms_created(const struct TnSession *s);

/*
 Message of the last failed call on this thread; empty after a success.
 Valid until the next call on the same thread.
 */
const char *tn_last_error_message(void);

/*
 Library version as a static string.
 */
const char *tn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TERMNET_H */
