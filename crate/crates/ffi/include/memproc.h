#ifndef MEMPROC_H
#define MEMPROC_H

#include <stddef.h>
#include <stdint.h>

// Result codes. Zero is success.
typedef enum MemprocStatus {
  MEMPROC_STATUS_OK = 0,
  MEMPROC_STATUS_NULL_ARGUMENT = 1,
  MEMPROC_STATUS_INVALID_UTF8 = 2,
  MEMPROC_STATUS_PARSE = 3,
  MEMPROC_STATUS_UNKNOWN_PROFILE = 4,
  MEMPROC_STATUS_UNKNOWN_METHOD = 5,
  MEMPROC_STATUS_INVALID_ARGUMENT = 6,
  MEMPROC_STATUS_NOT_APPLICABLE = 7,
  MEMPROC_STATUS_INFEASIBLE = 8,
  MEMPROC_STATUS_IO = 9,
  MEMPROC_STATUS_INTERNAL = 10,
} MemprocStatus;

// Named devices plus the link between them.
typedef struct MemprocDeviceSet MemprocDeviceSet;

// A selected placement.
typedef struct MemprocPlan MemprocPlan;

// A workload configuration for one method.
typedef struct MemprocWorkload MemprocWorkload;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *memproc_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void memproc_string_free(char *s);

// Library version as a static string.
const char *memproc_version(void);

// Loads device and link profiles by name. `profile_dir` may be null to use
// the shipped profiles only.
//
// # Safety
// `names` points to `n_names` valid C strings; `link` is a valid C string.
enum MemprocStatus memproc_devices_new(const char *const *names,
                                       size_t n_names,
                                       const char *link,
                                       const char *profile_dir,
                                       struct MemprocDeviceSet **out);

// # Safety
// `set` is null or a handle from [`memproc_devices_new`].
void memproc_devices_free(struct MemprocDeviceSet *set);

// Default workload for a method, by canonical name or fixture slug.
//
// # Safety
// `method` is a valid C string; `out` is writable.
enum MemprocStatus memproc_workload_defaults(const char *method, struct MemprocWorkload **out);

// Sets one workload field. `value` is a TOML literal, e.g. `"262144"`.
//
// # Safety
// `w` is a live workload handle; `key` and `value` are valid C strings.
enum MemprocStatus memproc_workload_set(struct MemprocWorkload *w,
                                        const char *key,
                                        const char *value);

// # Safety
// `w` is null or a handle from [`memproc_workload_defaults`].
void memproc_workload_free(struct MemprocWorkload *w);

// Flops and bytes of one node: 0..=3 for the pipeline steps in order,
// 4 for the rest of the model.
//
// # Safety
// `w` is a live workload handle; `flops` and `bytes` are writable.
enum MemprocStatus memproc_step_work(const struct MemprocWorkload *w,
                                     uint32_t node,
                                     double *flops,
                                     double *bytes);

// Selects a placement with the default scheduler policy.
//
// # Safety
// `w` and `set` are live handles; `out` is writable.
enum MemprocStatus memproc_plan_select(const struct MemprocWorkload *w,
                                       const struct MemprocDeviceSet *set,
                                       struct MemprocPlan **out);

// Predicted latency in seconds, energy in joules (NaN when a device has no
// power figure) and memory-processing share of decoding time.
//
// # Safety
// `plan` is a live handle; the out-pointers are writable.
enum MemprocStatus memproc_plan_metrics(const struct MemprocPlan *plan,
                                        double *latency_s,
                                        double *energy_j,
                                        double *fraction);

// Device name for step 0..=3, returned as an owned string.
//
// # Safety
// `plan` is a live handle; `out` is writable.
enum MemprocStatus memproc_plan_device(const struct MemprocPlan *plan, uint32_t step, char **out);

// The versioned plain-text plan record, as an owned string.
//
// # Safety
// `plan` is a live handle; `out` is writable.
enum MemprocStatus memproc_plan_record(const struct MemprocPlan *plan, char **out);

// # Safety
// `plan` is null or a handle from [`memproc_plan_select`].
void memproc_plan_free(struct MemprocPlan *plan);

// Ids of the `k` highest scores, best first, ties to the smaller id.
// `out_ids` must hold `min(k, n)` entries; the count is written to `out_len`.
//
// # Safety
// `scores` holds `n` floats (may be null when `n` is 0); `out_ids` holds
// `min(k, n)` entries; `out_len` is writable.
enum MemprocStatus memproc_topk(const float *scores,
                                size_t n,
                                size_t k,
                                size_t *out_ids,
                                size_t *out_len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MEMPROC_H */
