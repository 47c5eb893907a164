/* C interface to the shadowtomo library.
 *
 * Every fallible call returns an StStatus; ST_STATUS_OK is zero. On failure
 * the call records a message retrievable with st_last_error(), valid until
 * the next failing call on the same thread. Handles are opaque and are
 * released with their paired _free function exactly once; _free accepts
 * NULL. Returned strings are released with st_string_free(), byte buffers
 * with st_bytes_free(). */

#ifndef SHADOWTOMO_H
#define SHADOWTOMO_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum StStatus {
  // Success.
  ST_STATUS_OK = 0,
  // A required pointer argument was null.
  ST_STATUS_NULL_POINTER = 1,
  // Arguments were rejected (parse failure, dimension mismatch, ...).
  ST_STATUS_INVALID_ARGUMENT = 2,
  // The request exceeds a documented size cap.
  ST_STATUS_UNSUPPORTED = 3,
  // Unexpected internal failure.
  ST_STATUS_INTERNAL = 4,
} StStatus;

// Opaque compressed-archive handle.
typedef struct StArchive StArchive;

// Opaque estimation report handle.
typedef struct StReport StReport;

// Opaque quantum state handle.
typedef struct StState StState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *st_version(void);

// Message of the most recent failure on this thread, empty if none.
const char *st_last_error(void);

// Build a state from a generator spec such as `"ghz"`, `"maximally_mixed"`,
// `"haar_random seed=7"`, or `"computational 0110"`.
//
// # Safety
// `spec` must be a NUL-terminated string; `out` must be a valid pointer.
enum StStatus st_state_from_generator(const char *spec, size_t n_qubits, struct StState **out);

// Parse a state file body: either a single generator line or amplitude
// lines of the form `bits real [imag]`.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be a valid pointer.
enum StStatus st_state_parse(const char *text, size_t n_qubits, struct StState **out);

// Qubit count of a state, 0 for null.
//
// # Safety
// `state` must be null or a live handle.
size_t st_state_num_qubits(const struct StState *state);

// Exact expectation of a Pauli string on a state.
//
// # Safety
// All pointers must be valid; `pauli` must be NUL-terminated.
enum StStatus st_state_expectation(const struct StState *state, const char *pauli, double *out);

// Release a state handle. Accepts null.
//
// # Safety
// `state` must be null or an unreleased handle from this library.
void st_state_free(struct StState *state);

// Estimate every Pauli expectation on `state` to within `epsilon`.
//
// # Safety
// `state` must be a live handle; `out` must be a valid pointer.
enum StStatus st_learn_all_paulis(const struct StState *state,
                                  double epsilon,
                                  uint64_t seed,
                                  struct StReport **out);

// Estimate every weight-`locality` Pauli expectation on `state`.
// `engine` picks the single-copy coloring; null means greedy.
//
// # Safety
// `state` must be a live handle; `engine` null or NUL-terminated; `out`
// must be a valid pointer.
enum StStatus st_learn_local_paulis(const struct StState *state,
                                    size_t locality,
                                    const char *engine,
                                    double epsilon,
                                    uint64_t seed,
                                    struct StReport **out);

// Estimate every degree-`2k` Majorana monomial expectation on `state`,
// which must act on the qubit count of the chosen mapping (`"jw"` or
// `"ternary"`) at `n_modes` modes.
//
// # Safety
// `state` must be a live handle; `mapping` null or NUL-terminated; `out`
// must be a valid pointer.
enum StStatus st_learn_fermionic(const struct StState *state,
                                 const char *mapping,
                                 size_t n_modes,
                                 size_t k,
                                 double epsilon,
                                 uint64_t seed,
                                 struct StReport **out);

// Number of target operators in a report, 0 for null.
//
// # Safety
// `report` must be null or a live handle.
size_t st_report_len(const struct StReport *report);

// Copy the label of target `index` into `buf` (NUL-terminated).
//
// # Safety
// `report` must be a live handle; `buf` must point to `buf_len` writable
// bytes.
enum StStatus st_report_operator(const struct StReport *report,
                                 size_t index,
                                 char *buf,
                                 size_t buf_len);

// Estimate for target `index`.
//
// # Safety
// `report` must be a live handle; `out` must be a valid pointer.
enum StStatus st_report_estimate(const struct StReport *report, size_t index, double *out);

// Whether target `index` survived the magnitude stage: 1, 0, or -1 on a
// bad argument.
//
// # Safety
// `report` must be null or a live handle.
int st_report_in_s_eps(const struct StReport *report, size_t index);

// Total state copies consumed across all stages, 0 for null.
//
// # Safety
// `report` must be null or a live handle.
uint64_t st_report_total_copies(const struct StReport *report);

// Serialize the full report as JSON into a caller-owned string.
//
// # Safety
// `report` must be a live handle; `out` must be a valid pointer.
enum StStatus st_report_to_json(const struct StReport *report, char **out);

// Release a report handle. Accepts null.
//
// # Safety
// `report` must be null or an unreleased handle from this library.
void st_report_free(struct StReport *report);

// Run the two-copy pipeline over all weight-`locality` Paulis with raw
// sample recording and compress the result.
//
// # Safety
// `state` must be a live handle; `engine` null or NUL-terminated; `out`
// must be a valid pointer.
enum StStatus st_archive_create(const struct StState *state,
                                size_t locality,
                                const char *engine,
                                double epsilon,
                                uint64_t seed,
                                struct StArchive **out);

// Answer a Pauli query from an archive. `in_s_eps` and `extrapolated`
// receive 0 or 1.
//
// # Safety
// All pointers must be valid; `pauli` must be NUL-terminated.
enum StStatus st_archive_query(const struct StArchive *archive,
                               const char *pauli,
                               double *estimate,
                               int *in_s_eps,
                               int *extrapolated);

// Serialize an archive into a caller-owned byte buffer.
//
// # Safety
// `archive` must be a live handle; `out_bytes` and `out_len` must be
// valid pointers.
enum StStatus st_archive_serialize(const struct StArchive *archive,
                                   uint8_t **out_bytes,
                                   size_t *out_len);

// Rebuild an archive from serialized bytes.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be a valid
// pointer.
enum StStatus st_archive_deserialize(const uint8_t *bytes, size_t len, struct StArchive **out);

// Release an archive handle. Accepts null.
//
// # Safety
// `archive` must be null or an unreleased handle from this library.
void st_archive_free(struct StArchive *archive);

// Release a string returned by this library. Accepts null.
//
// # Safety
// `s` must be null or an unreleased string from this library.
void st_string_free(char *s);

// Release a byte buffer returned by this library. Accepts null.
//
// # Safety
// `bytes` must be null or an unreleased buffer of length `len` from this
// library.
void st_bytes_free(uint8_t *bytes, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHADOWTOMO_H */
