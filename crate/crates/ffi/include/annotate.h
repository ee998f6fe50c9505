#ifndef ANNOTATE_H
#define ANNOTATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AnnotateStatus {
  ANNOTATE_STATUS_OK = 0,
  ANNOTATE_STATUS_NULL_ARGUMENT = 1,
  ANNOTATE_STATUS_INVALID_UTF8 = 2,
  ANNOTATE_STATUS_PARSE = 3,
  ANNOTATE_STATUS_SCHEMA = 4,
  ANNOTATE_STATUS_INVALID_PROJECT = 5,
  ANNOTATE_STATUS_REJECTED = 6,
  ANNOTATE_STATUS_NOT_FOUND = 7,
  ANNOTATE_STATUS_INVALID_ARGUMENT = 8,
  ANNOTATE_STATUS_PANIC = 99,
} AnnotateStatus;

/**
 * Opaque project handle.
 */
typedef struct AnnotateProject AnnotateProject;

/**
 * Bytes owned by the library.
 */
typedef struct AnnotateBuffer {
  uint8_t *data;
  size_t len;
} AnnotateBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library from this thread.
 */
const char *annotate_last_error(void);

/**
 * Creates an empty project with a random pid.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum AnnotateStatus annotate_project_new(const char *name, struct AnnotateProject **out);

/**
 * Parses and validates a project document.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum AnnotateStatus annotate_project_load(const uint8_t *data,
                                          size_t len,
                                          struct AnnotateProject **out);

/**
 * # Safety
 * `project` must be NULL or a handle from this library not yet freed.
 */
void annotate_project_free(struct AnnotateProject *project);

/**
 * Canonical JSON document. Fails with `INVALID_PROJECT` if the project does
 * not validate.
 *
 * # Safety
 * `project` must be a live handle; `out` must be writable.
 */
enum AnnotateStatus annotate_project_save(const struct AnnotateProject *project,
                                          struct AnnotateBuffer *out);

/**
 * # Safety
 * `project` must be a live handle; `out` must be writable.
 */
enum AnnotateStatus annotate_project_export_csv(const struct AnnotateProject *project,
                                                struct AnnotateBuffer *out);

/**
 * Number of violations, and optionally their text, one per line.
 *
 * # Safety
 * `project` must be a live handle; `count` must be writable; `text` may be
 * NULL.
 */
enum AnnotateStatus annotate_project_validate(const struct AnnotateProject *project,
                                              size_t *count,
                                              struct AnnotateBuffer *text);

/**
 * # Safety
 * `project` must be a live handle.
 */
uint64_t annotate_project_revision(const struct AnnotateProject *project);

/**
 * # Safety
 * `project` must be a live handle.
 */
size_t annotate_project_entry_count(const struct AnnotateProject *project);

/**
 * Adds an attribute from a JSON spec such as
 * `{"name":"species","anchor":"spatial_region","input":"dropdown","options":{"1":"cat"}}`
 * and returns its new id.
 *
 * # Safety
 * `project` must be a live handle; `spec_json` a NUL-terminated string;
 * `out_aid` writable. The returned id is freed with `annotate_string_free`.
 */
enum AnnotateStatus annotate_project_add_attribute(struct AnnotateProject *project,
                                                   const char *spec_json,
                                                   char **out_aid);

/**
 * Adds a file from a JSON spec such as
 * `{"uri":"a.mp4","media":"video","dims":[1280,720],"duration":60}`.
 *
 * # Safety
 * As for `annotate_project_add_attribute`.
 */
enum AnnotateStatus annotate_project_add_file(struct AnnotateProject *project,
                                              const char *spec_json,
                                              char **out_fid);

/**
 * Inserts (`mid` NULL) or replaces (`mid` set) a metadata entry given as
 * JSON `{"file_id":"f2","z":[1.5,3],"xy":{...},"av":{"a1":"x"}}`.
 *
 * # Safety
 * `project` must be a live handle; `mid` NULL or a NUL-terminated string;
 * `draft_json` a NUL-terminated string; `out_mid` NULL or writable.
 */
enum AnnotateStatus annotate_project_upsert(struct AnnotateProject *project,
                                            const char *mid,
                                            const char *draft_json,
                                            char **out_mid);

/**
 * # Safety
 * `project` must be a live handle; `mid` a NUL-terminated string.
 */
enum AnnotateStatus annotate_project_delete(struct AnnotateProject *project, const char *mid);

/**
 * Whether `(x, y)` lies inside `shape_json` or within `tolerance` of its
 * outline.
 *
 * # Safety
 * `shape_json` must be a NUL-terminated string; `out` writable.
 */
enum AnnotateStatus annotate_shape_hit_test(const char *shape_json,
                                            double x,
                                            double y,
                                            double tolerance,
                                            bool *out);

/**
 * # Safety
 * `shape_json` must be a NUL-terminated string; `out` writable.
 */
enum AnnotateStatus annotate_shape_area(const char *shape_json, double *out);

/**
 * Rounds `t` to the nearest multiple of `grid` seconds.
 *
 * # Safety
 * `out` must be writable.
 */
enum AnnotateStatus annotate_snap(double t, double grid, double *out);

/**
 * # Safety
 * `buf` must have come from this library and not been freed.
 */
void annotate_buffer_free(struct AnnotateBuffer buf);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void annotate_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANNOTATE_H */
