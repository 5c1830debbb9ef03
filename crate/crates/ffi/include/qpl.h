#ifndef QPL_H
#define QPL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Output format of [`qpl_plan_run`].
typedef enum QplFormat {
  QPL_FORMAT_CSV = 0,
  QPL_FORMAT_JSON = 1,
} QplFormat;

// Verdict of a prefix check.
typedef enum QplPrefix {
  QPL_PREFIX_VALID = 0,
  QPL_PREFIX_COMPLETE = 1,
  QPL_PREFIX_INVALID = 2,
} QplPrefix;

// Result code of every fallible call.
typedef enum QplStatus {
  QPL_STATUS_OK = 0,
  QPL_STATUS_NULL_ARGUMENT = 1,
  QPL_STATUS_INVALID_UTF8 = 2,
  QPL_STATUS_PARSE_ERROR = 3,
  QPL_STATUS_VALIDATION_ERROR = 4,
  QPL_STATUS_LOAD_ERROR = 5,
  QPL_STATUS_EXECUTION_ERROR = 6,
  QPL_STATUS_PANIC = 7,
} QplStatus;

// A schema with loaded table contents.
typedef struct QplDatabase QplDatabase;

// A parsed plan.
typedef struct QplPlan QplPlan;

// A relational schema.
typedef struct QplSchema QplSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into this library on the same thread.
const char *qpl_last_error(void);

// Library version as a static NUL-terminated string.
const char *qpl_version(void);

// Parses a schema JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum QplStatus qpl_schema_load(const char *json, struct QplSchema **out);

// # Safety
// `schema` must be NULL or a handle from [`qpl_schema_load`] not yet freed.
void qpl_schema_free(struct QplSchema *schema);

// Loads `<table>.csv` for every table of `schema` from `data_dir`.
//
// # Safety
// `schema` must be a live handle, `data_dir` a NUL-terminated string and `out` writable.
enum QplStatus qpl_database_load(const struct QplSchema *schema,
                                 const char *data_dir,
                                 struct QplDatabase **out);

// # Safety
// `db` must be NULL or a handle from [`qpl_database_load`] not yet freed.
void qpl_database_free(struct QplDatabase *db);

// Parses QPL text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum QplStatus qpl_plan_parse(const char *text, struct QplPlan **out);

// # Safety
// `plan` must be NULL or a handle from [`qpl_plan_parse`] not yet freed.
void qpl_plan_free(struct QplPlan *plan);

// Writes the plan's depth and number of steps.
//
// # Safety
// `plan` must be a live handle; `depth` and `steps` writable.
enum QplStatus qpl_plan_metrics(const struct QplPlan *plan, size_t *depth, size_t *steps);

// Canonical single-line form of the plan.
//
// # Safety
// `plan` must be a live handle and `out` writable.
enum QplStatus qpl_plan_serialize(const struct QplPlan *plan, char **out);

// Returns `QPL_STATUS_OK` when the plan is valid for `schema`, otherwise
// `QPL_STATUS_VALIDATION_ERROR` with the diagnostics in [`qpl_last_error`].
//
// # Safety
// `plan` and `schema` must be live handles.
enum QplStatus qpl_plan_validate(const struct QplPlan *plan, const struct QplSchema *schema);

// Renders the plan's CTE program.
//
// # Safety
// `plan` and `schema` must be live handles and `out` writable.
enum QplStatus qpl_plan_compile(const struct QplPlan *plan,
                                const struct QplSchema *schema,
                                char **out);

// Runs the plan and writes its result as CSV or JSON.
//
// # Safety
// `plan` and `db` must be live handles and `out` writable.
enum QplStatus qpl_plan_run(const struct QplPlan *plan,
                            const struct QplDatabase *db,
                            enum QplFormat format,
                            char **out);

// Classifies a character prefix of a plan. `schema` may be NULL. On an
// invalid prefix `offset` (if not NULL) receives the byte offset of the
// error and [`qpl_last_error`] its reason.
//
// # Safety
// `prefix` must be a NUL-terminated string, `schema` NULL or a live handle,
// `verdict` writable and `offset` NULL or writable.
enum QplStatus qpl_check_prefix(const char *prefix,
                                const struct QplSchema *schema,
                                enum QplPrefix *verdict,
                                size_t *offset);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string returned through an out-parameter of this
// library, not yet freed.
void qpl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPL_H */
