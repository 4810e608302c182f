#ifndef BEC_TRANSPORT_H
#define BEC_TRANSPORT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  BT_STATUS_NULL_POINTER = 1,
  BT_STATUS_INVALID_INPUT = 2,
  BT_STATUS_CONFIG = 3,
  BT_STATUS_OUT_OF_RANGE = 4,
  BT_STATUS_NUMERICAL = 5,
  BT_STATUS_IO = 6,
  BT_STATUS_BUFFER_TOO_SMALL = 7,
  BT_STATUS_PANIC = 8,
} BtStatus;

// Control ramp u(t_k) with its bias endpoints.
typedef struct BtRamp BtRamp;

// Bias -> trap map.
typedef struct BtTrapMap BtTrapMap;

// Transport metrics of a forward run; SI lengths, energies in nK.
typedef struct BtMetrics {
  double mean_classical_nk;
  double max_offset_m;
  double max_velocity_offset_m_per_s;
  double residual_amplitude_m[3];
} BtMetrics;

// Cost of a ramp, nK.
typedef struct BtCost {
  double final_classical_nk;
  double final_quantum_nk;
  double mean_classical_nk;
  double total;
} BtCost;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated).
// Returns the full message length without the NUL, 0 when there is none.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
uintptr_t bt_last_error(char *buf, uintptr_t len);

// Samples the default Z-wire surrogate (Rb-87, N = 1e5) over `[min, max]` G.
//
// # Safety
// `out` must be a valid pointer.
enum BtStatus bt_trap_map_build_default(double bias_min_gauss,
                                        double bias_max_gauss,
                                        uintptr_t samples,
                                        struct BtTrapMap **out);

// Reads a tabulated map (`B_gauss z0_mm fx_Hz fy_Hz fz_Hz [rotation_rad]`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum BtStatus bt_trap_map_load(const char *path, struct BtTrapMap **out);

// Trap height (m) and angular frequencies (rad/s) at one bias.
//
// # Safety
// `map` must come from this library; `z0` and `omega` (3 entries) must be valid.
enum BtStatus bt_trap_map_eval(const struct BtTrapMap *map,
                               double bias_gauss,
                               double *z0,
                               double *omega);

// # Safety
// `map` must be null or come from this library, and not be used afterwards.
void bt_trap_map_free(struct BtTrapMap *map);

// Shortcut-to-adiabaticity ramp.
//
// # Safety
// `map` must come from this library and `out` be valid.
enum BtStatus bt_ramp_sta(const struct BtTrapMap *map,
                          double final_time,
                          uintptr_t node_count,
                          double bias_start_gauss,
                          double bias_end_gauss,
                          struct BtRamp **out);

// Linear ramp u = t / t_f.
//
// # Safety
// `out` must be valid.
enum BtStatus bt_ramp_linear(double final_time,
                             uintptr_t node_count,
                             double bias_start_gauss,
                             double bias_end_gauss,
                             struct BtRamp **out);

// Number of nodes, 0 for a null handle.
//
// # Safety
// `ramp` must be null or come from this library.
uintptr_t bt_ramp_node_count(const struct BtRamp *ramp);

// Copies u at the nodes into `values` (`len` >= node count).
//
// # Safety
// `values` must be valid for `len` doubles.
enum BtStatus bt_ramp_values(const struct BtRamp *ramp, double *values, uintptr_t len);

// # Safety
// `ramp` must be null or come from this library, and not be used afterwards.
void bt_ramp_free(struct BtRamp *ramp);

// Forward run from the initial ground state with a static hold, 4 Verlet substeps per node.
//
// # Safety
// Handles must come from this library; `metrics` must be valid.
enum BtStatus bt_simulate(const struct BtTrapMap *map,
                          const struct BtRamp *ramp,
                          double hold_time,
                          struct BtMetrics *metrics);

// Cost of `ramp` under the weights (lambda1, lambda2, lambda3).
//
// # Safety
// Handles must come from this library; `cost` must be valid.
enum BtStatus bt_evaluate(const struct BtTrapMap *map,
                          const struct BtRamp *ramp,
                          double lambda1,
                          double lambda2,
                          double lambda3,
                          struct BtCost *cost);

// Gradient descent from `initial`; the improved ramp is returned in `out`.
//
// # Safety
// Handles must come from this library; `out` must be valid, `cost` may be null.
enum BtStatus bt_optimize(const struct BtTrapMap *map,
                          const struct BtRamp *initial,
                          double lambda1,
                          double lambda2,
                          double lambda3,
                          double epsilon,
                          uintptr_t max_iterations,
                          struct BtRamp **out,
                          struct BtCost *cost);

// Library version as a static NUL-terminated string.
const char *bt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEC_TRANSPORT_H */
