#ifndef PARTIDS_H
#define PARTIDS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PartidsStatus {
  PARTIDS_STATUS_OK = 0,
  PARTIDS_STATUS_NULL_POINTER = 1,
  PARTIDS_STATUS_INVALID_UTF8 = 2,
  /**
   * No rule in the text could be parsed.
   */
  PARTIDS_STATUS_PARSE = 3,
  /**
   * The frame is not a well-formed Ethernet frame.
   */
  PARTIDS_STATUS_DECODE = 4,
  /**
   * The output buffer is too small; `needed` holds the required size.
   */
  PARTIDS_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * No alert is queued.
   */
  PARTIDS_STATUS_EMPTY = 6,
  PARTIDS_STATUS_PANIC = 7,
} PartidsStatus;

typedef enum PartidsVerdict {
  PARTIDS_VERDICT_ALLOW = 0,
  PARTIDS_VERDICT_BLOCK = 1,
  /**
   * Decoded, but not IPv4; passed through without analysis.
   */
  PARTIDS_VERDICT_SKIPPED = 2,
} PartidsVerdict;

/**
 * One analysis worker with its own flow table and alert queue.
 */
typedef struct PartidsAnalyzer PartidsAnalyzer;

/**
 * A compiled, immutable rule set. Shareable between analyzers.
 */
typedef struct PartidsRuleset PartidsRuleset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The last error message on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *partids_last_error(void);

/**
 * Parses a rules file held in `text` (NUL-terminated UTF-8). Lines that do
 * not parse are skipped and counted in `skipped` (may be NULL). Address and
 * port variables resolve to `any`.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum PartidsStatus partids_ruleset_parse(const char *text,
                                         struct PartidsRuleset **out,
                                         size_t *skipped);

/**
 * Number of rules in the set; 0 for NULL.
 *
 * # Safety
 * `rules` must be NULL or a live handle.
 */
size_t partids_ruleset_len(const struct PartidsRuleset *rules);

/**
 * # Safety
 * `rules` must be NULL or a handle not yet freed.
 */
void partids_ruleset_free(struct PartidsRuleset *rules);

/**
 * Creates an analyzer over `rules`. The analyzer keeps its own reference,
 * so the rule set may be freed first.
 *
 * # Safety
 * `rules` must be a live handle and `out` a valid pointer.
 */
enum PartidsStatus partids_analyzer_new(const struct PartidsRuleset *rules,
                                        bool inline_mode,
                                        struct PartidsAnalyzer **out);

/**
 * Analyzes one Ethernet frame captured at `ts_us` (microseconds,
 * non-decreasing). Alerts it raises are queued for
 * [`partids_analyzer_next_alert`]; their count goes to `alerts` (may be NULL).
 *
 * # Safety
 * `a` must be a live handle, `frame` must point to `len` readable bytes and
 * `verdict` must be a valid pointer.
 */
enum PartidsStatus partids_analyzer_process(struct PartidsAnalyzer *a,
                                            const uint8_t *frame,
                                            size_t len,
                                            uint64_t ts_us,
                                            enum PartidsVerdict *verdict,
                                            uint32_t *alerts);

/**
 * Pops the oldest queued alert as a NUL-terminated fast-format line.
 * Returns `Empty` when none is queued. On `BufferTooSmall` the alert stays
 * queued and `needed` (may be NULL) holds the size including the NUL.
 *
 * # Safety
 * `a` must be a live handle and `buf` must point to `cap` writable bytes.
 */
enum PartidsStatus partids_analyzer_next_alert(struct PartidsAnalyzer *a,
                                               char *buf,
                                               size_t cap,
                                               size_t *needed);

/**
 * Packets analyzed so far; 0 for NULL.
 *
 * # Safety
 * `a` must be NULL or a live handle.
 */
uint64_t partids_analyzer_packets(const struct PartidsAnalyzer *a);

/**
 * # Safety
 * `a` must be NULL or a handle not yet freed.
 */
void partids_analyzer_free(struct PartidsAnalyzer *a);

/**
 * Symmetric flow hash used to pick a worker. Addresses are host-order
 * IPv4; `proto` is the IP protocol number.
 */
uint32_t partids_rss_hash(uint8_t proto,
                          uint32_t src_ip,
                          uint16_t src_port,
                          uint32_t dst_ip,
                          uint16_t dst_port);

/**
 * Library version, static storage.
 */
const char *partids_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARTIDS_H */
