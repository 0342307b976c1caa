#ifndef TIMEBIN_H
#define TIMEBIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Loss channel selector for [`tb_config_set_loss`].
 */
typedef enum TbLossChannel {
  TB_RADIATIVE = 0,
  TB_DEPHASING = 1,
} TbLossChannel;

/**
 * Result codes of fallible calls.
 */
typedef enum TbStatus {
  TB_OK = 0,
  TB_NULL_ARGUMENT = 1,
  TB_CONFIG_ERROR = 2,
  TB_NUMERICAL_ERROR = 3,
  TB_DEGENERATE_INPUT = 4,
  TB_IO_ERROR = 5,
  TB_PANIC = 6,
} TbStatus;

/**
 * Opaque run configuration.
 */
typedef struct TbConfig TbConfig;

/**
 * Opaque stabilizer report.
 */
typedef struct TbReport TbReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Configuration with all defaults.
 */
struct TbConfig *tb_config_default(void);

/**
 * Reads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TbStatus tb_config_from_file(const char *path, struct TbConfig **out);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void tb_config_free(struct TbConfig *config);

/**
 * Sets a transition-state loss rate (μeV).
 *
 * # Safety
 * `config` must be a live handle.
 */
enum TbStatus tb_config_set_loss(struct TbConfig *config, enum TbLossChannel channel, double rate);

/**
 * Closed-form detuning branches (μeV) for rotation angle `theta`.
 *
 * # Safety
 * `minus` and `plus` must be valid pointers.
 */
enum TbStatus tb_analytical_detuning(double theta,
                                     double epsilon,
                                     double sigma,
                                     double *minus,
                                     double *plus);

/**
 * Calibrates R_ϑ(Θ); writes the detuning (μeV) and the average fidelity.
 *
 * # Safety
 * `config` must be a live handle; outputs must be valid pointers.
 */
enum TbStatus tb_calibrate_rotation(const struct TbConfig *config,
                                    double theta,
                                    double azimuth,
                                    double *detuning,
                                    double *fidelity);

/**
 * Full pipeline on a kmax + 2 qubit protocol with calibrated rotations.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_run_stabilizers(const struct TbConfig *config,
                                 uint32_t resolution,
                                 uint32_t kmax,
                                 struct TbReport **out);

/**
 * # Safety
 * `report` must come from this library and not be used afterwards.
 */
void tb_report_free(struct TbReport *report);

/**
 * ⟨ΦZ⟩ as (re, im).
 *
 * # Safety
 * `report` must be a live handle; outputs must be valid pointers.
 */
enum TbStatus tb_report_phi_z(const struct TbReport *report, double *re, double *im);

/**
 * Number of ⟨ZΦZ⟩ values in the report (0 for a NULL handle).
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
size_t tb_report_z_phi_z_count(const struct TbReport *report);

/**
 * ⟨ZΦZ⟩⁽ᵏ⁾ as (re, im) for 1-based `k`.
 *
 * # Safety
 * `report` must be a live handle; outputs must be valid pointers.
 */
enum TbStatus tb_report_z_phi_z(const struct TbReport *report, size_t k, double *re, double *im);

/**
 * ⟨W⟩ for a cluster of `n` qubits; missing ⟨ZXZ⟩ terms repeat the smallest
 * supplied one. NaN when `zxz` is NULL with `len > 0`.
 *
 * # Safety
 * `zxz` must point to `len` doubles (or be NULL when `len` is 0).
 */
double tb_witness(double xz, const double *zxz, size_t len, size_t n);

/**
 * floor(xz/(1 − zxz) + 1). Writes 1 to `unbounded` (and 0 to `out`) when
 * zxz ≥ 1.
 *
 * # Safety
 * Outputs must be valid pointers.
 */
enum TbStatus tb_length_bound(double xz, double zxz, uint64_t *out, int32_t *unbounded);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIMEBIN_H */
