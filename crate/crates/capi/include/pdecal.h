#ifndef PDECAL_H
#define PDECAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define PDECAL_OK 0

#define PDECAL_ERR_NULL_ARGUMENT 1

#define PDECAL_ERR_INVALID_STRING 2

#define PDECAL_ERR_IO 3

#define PDECAL_ERR_CONFIG 4

#define PDECAL_ERR_NUMERIC 5

#define PDECAL_ERR_GRID_MISMATCH 6

#define PDECAL_ERR_BUFFER_TOO_SMALL 7

/**
 * Calibrated residual band (per-cell or whole-domain).
 */
typedef struct PdecalCalibration PdecalCalibration;

/**
 * Dense field over a space or space-time grid.
 */
typedef struct PdecalField PdecalField;

/**
 * Compiled PDE residual program.
 */
typedef struct PdecalProgram PdecalProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pdecal_last_error(void);

/**
 * Load a field from a dump file written by this library.
 */
int pdecal_field_load(const char *path, struct PdecalField **out);

int pdecal_field_save(const struct PdecalField *field, const char *path);

void pdecal_field_free(struct PdecalField *field);

/**
 * Number of grid axes.
 */
int pdecal_field_ndim(const struct PdecalField *field, size_t *out);

/**
 * Grid extents; `shape` must hold at least `ndim` entries.
 */
int pdecal_field_shape(const struct PdecalField *field, size_t *shape, size_t len);

/**
 * Copy the row-major field values; `buf` must hold the product of the
 * grid extents.
 */
int pdecal_field_values(const struct PdecalField *field, double *buf, size_t len);

/**
 * Advection residual u_t + speed * u_x on the grid of `grid_source`
 * (typically a rollout field).
 */
int pdecal_program_advection(const struct PdecalField *grid_source,
                             double speed,
                             struct PdecalProgram **out);

/**
 * Viscous Burgers residual u_t + u u_x - viscosity * u_xx.
 */
int pdecal_program_burgers(const struct PdecalField *grid_source,
                           double viscosity,
                           struct PdecalProgram **out);

/**
 * 2D wave residual u_tt - speed^2 (u_xx + u_yy).
 */
int pdecal_program_wave(const struct PdecalField *grid_source,
                        double speed,
                        struct PdecalProgram **out);

void pdecal_program_free(struct PdecalProgram *program);

/**
 * Evaluate the signed residual of a prediction; the result lives on the
 * interior-cropped grid.
 */
int pdecal_residual_evaluate(const struct PdecalProgram *program,
                             const struct PdecalField *prediction,
                             struct PdecalField **out);

/**
 * Per-cell residual quantile band from calibration rollouts.
 */
int pdecal_calibrate_marginal(const struct PdecalProgram *program,
                              const struct PdecalField *const *predictions,
                              size_t count,
                              double alpha,
                              struct PdecalCalibration **out);

/**
 * Whole-domain sup-statistic band from calibration rollouts.
 */
int pdecal_calibrate_joint(const struct PdecalProgram *program,
                           const struct PdecalField *const *predictions,
                           size_t count,
                           double alpha,
                           struct PdecalCalibration **out);

void pdecal_calibration_free(struct PdecalCalibration *calibration);

/**
 * Check a prediction against the calibrated band. On success `accepted`
 * is 1 or 0 and `violations` counts cells outside the band.
 */
int pdecal_validate(const struct PdecalProgram *program,
                    const struct PdecalCalibration *calibration,
                    const struct PdecalField *prediction,
                    int *accepted,
                    size_t *violations);

/**
 * Persist a calibration: a one-line header followed by the band field in
 * the dump format.
 */
int pdecal_calibration_save(const struct PdecalCalibration *calibration, const char *path);

int pdecal_calibration_load(const char *path, struct PdecalCalibration **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PDECAL_H */
