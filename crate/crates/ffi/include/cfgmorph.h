#ifndef CFGMORPH_H
#define CFGMORPH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum CfmStatus {
  CFM_STATUS_OK = 0,
  CFM_STATUS_NULL_ARGUMENT = 1,
  CFM_STATUS_INVALID_UTF8 = 2,
  CFM_STATUS_PARSE = 3,
  CFM_STATUS_TRANSFORM = 4,
  CFM_STATUS_VM = 5,
  CFM_STATUS_STEP_LIMIT = 6,
  CFM_STATUS_BUFFER_TOO_SMALL = 7,
  CFM_STATUS_ANALYSIS = 8,
  CFM_STATUS_PANIC = 9,
} CfmStatus;

/**
 * The result of one obfuscation run.
 */
typedef struct CfmObfuscated CfmObfuscated;

/**
 * A parsed mini-ISA program.
 */
typedef struct CfmProgram CfmProgram;

/**
 * Pipeline parameters; obtain defaults from [`cfm_params_default`].
 */
typedef struct CfmParams {
  double target_factor;
  double edge_budget;
  uint32_t extra_hops;
  uint32_t max_restarts;
} CfmParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cfm_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer returned by a `cfm_*` function that
 * documents string ownership, not yet freed.
 */
void cfm_string_free(char *s);

struct CfmParams cfm_params_default(void);

/**
 * Parse assembler text into a program handle.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfmStatus cfm_program_parse(const char *source, struct CfmProgram **out);

/**
 * # Safety
 * `p` must be null or a handle from this library, not yet freed.
 */
void cfm_program_free(struct CfmProgram *p);

/**
 * Assembler text of `p`; free with [`cfm_string_free`]. Null on failure.
 *
 * # Safety
 * `p` must be a valid program handle.
 */
char *cfm_program_text(const struct CfmProgram *p);

/**
 * Number of basic blocks in the restricted CFG of `p`.
 *
 * # Safety
 * `p` must be a valid program handle.
 */
size_t cfm_program_block_count(const struct CfmProgram *p);

/**
 * Run `p` on `inputs` (loaded into r0..). Writes at most `out_cap` output
 * words to `out`; `out_len` always receives the full output length.
 * Returns `BufferTooSmall` when the log did not fit.
 *
 * # Safety
 * `inputs` must point to `n_inputs` words (or be null when `n_inputs` is 0),
 * `out` to `out_cap` writable words (or be null when `out_cap` is 0);
 * `out_len` and `steps` may be null.
 */
enum CfmStatus cfm_program_run(const struct CfmProgram *p,
                               const uint64_t *inputs,
                               size_t n_inputs,
                               uint64_t max_steps,
                               uint64_t *out,
                               size_t out_cap,
                               size_t *out_len,
                               uint64_t *steps);

/**
 * Whether the restricted CFGs of `a` and `b` are isomorphic.
 *
 * # Safety
 * `a` and `b` must be valid program handles and `out` a valid pointer.
 */
enum CfmStatus cfm_cfg_isomorphic(const struct CfmProgram *a,
                                  const struct CfmProgram *b,
                                  bool *out);

/**
 * Obfuscate `p`; `params` may be null for defaults.
 *
 * # Safety
 * `p` must be a valid program handle, `params` null or valid, `out` valid.
 */
enum CfmStatus cfm_obfuscate(const struct CfmProgram *p,
                             const struct CfmParams *params,
                             uint64_t seed,
                             struct CfmObfuscated **out);

/**
 * # Safety
 * `ob` must be null or a handle from [`cfm_obfuscate`], not yet freed.
 */
void cfm_obfuscated_free(struct CfmObfuscated *ob);

/**
 * New program handle holding P′; free with [`cfm_program_free`].
 *
 * # Safety
 * `ob` must be a valid handle.
 */
struct CfmProgram *cfm_obfuscated_program(const struct CfmObfuscated *ob);

/**
 * Sidecar metadata as JSON; free with [`cfm_string_free`].
 *
 * # Safety
 * `ob` must be a valid handle.
 */
char *cfm_obfuscated_metadata(const struct CfmObfuscated *ob);

/**
 * Source and target node counts.
 *
 * # Safety
 * `ob` must be a valid handle; the output pointers may be null.
 */
enum CfmStatus cfm_obfuscated_node_counts(const struct CfmObfuscated *ob,
                                          size_t *source,
                                          size_t *target);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFGMORPH_H */
