#ifndef THZDT_H
#define THZDT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Outcome of an FFI call. Zero is success.
 */
typedef enum ThzdtStatus {
  THZDT_STATUS_OK = 0,
  THZDT_STATUS_NULL_POINTER = 1,
  THZDT_STATUS_INVALID_UTF8 = 2,
  THZDT_STATUS_IO = 3,
  THZDT_STATUS_PARSE = 4,
  THZDT_STATUS_INVALID = 5,
  THZDT_STATUS_DIMENSION = 6,
  THZDT_STATUS_NUMERICAL = 7,
  THZDT_STATUS_NO_DETECTION = 8,
  THZDT_STATUS_INSUFFICIENT_DATA = 9,
  THZDT_STATUS_BUFFER_TOO_SMALL = 10,
  THZDT_STATUS_PANIC = 11,
} ThzdtStatus;

/**
 * A trained neural field together with its RT conditioning.
 */
typedef struct ThzdtModel ThzdtModel;

/**
 * Per-cell channel attributes of one transmitter over a receiver plane.
 */
typedef struct ThzdtRadioMap ThzdtRadioMap;

/**
 * A validated indoor scene.
 */
typedef struct ThzdtScene ThzdtScene;

/**
 * Link budget for SINR and coverage.
 */
typedef struct ThzdtLinkBudget {
  double tx_power_dbm;
  double tx_gain_dbi;
  double rx_gain_dbi;
  double noise_density_dbm_hz;
  double bandwidth_hz;
  double noise_figure_db;
} ThzdtLinkBudget;

/**
 * One multipath component as seen at the receiver.
 */
typedef struct ThzdtMpc {
  /**
   * Received power relative to transmit power, dB.
   */
  double power_db;
  double delay_ns;
  double az_deg;
  double el_deg;
  /**
   * 0 for the direct path.
   */
  uint8_t bounce_order;
} ThzdtMpc;

/**
 * Channel prediction at one location.
 */
typedef struct ThzdtChannel {
  double p_db;
  double tau_ns;
  double az_deg;
  double el_deg;
  bool los;
  /**
   * The NLoS fallback replaced missing direct-path features.
   */
  bool fallback;
  uint32_t n_rt_paths;
} ThzdtChannel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *thzdt_version(void);

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to fit) into `buf`. Returns the message length in bytes without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `capacity` writable bytes.
 */
size_t thzdt_last_error_message(char *buf, size_t capacity);

/**
 * Default link budget of the engine.
 */
struct ThzdtLinkBudget thzdt_link_budget_default(void);

/**
 * Builds the built-in data-center hall.
 *
 * # Safety
 * `scene` must be a valid pointer to writable storage.
 */
enum ThzdtStatus thzdt_scene_canonical(struct ThzdtScene **scene);

/**
 * Loads and validates a scene file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `scene` writable.
 */
enum ThzdtStatus thzdt_scene_load(const char *path, struct ThzdtScene **scene);

/**
 * Writes a scene file.
 *
 * # Safety
 * `scene` must come from this library and `path` be NUL-terminated.
 */
enum ThzdtStatus thzdt_scene_save(const struct ThzdtScene *scene, const char *path);

/**
 * Releases a scene. Null is ignored.
 *
 * # Safety
 * `scene` must be null or come from this library and not be used afterwards.
 */
void thzdt_scene_free(struct ThzdtScene *scene);

/**
 * Number of declared nodes.
 *
 * # Safety
 * `scene` must come from this library and `count` be writable.
 */
enum ThzdtStatus thzdt_scene_node_count(const struct ThzdtScene *scene, size_t *count);

/**
 * Position `[x, y, z]` in meters of the node named `name`.
 *
 * # Safety
 * `scene` must come from this library, `name` be NUL-terminated and
 * `xyz` point to three writable doubles.
 */
enum ThzdtStatus thzdt_scene_node_position(const struct ThzdtScene *scene,
                                           const char *name,
                                           double *xyz);

/**
 * Traces every path from node `tx` to node `rx` up to `max_order` bounces.
 * Writes up to `capacity` components to `paths` and the full count to `len`;
 * returns `BufferTooSmall` when they do not fit.
 *
 * # Safety
 * Pointers must be valid; `paths` must hold `capacity` elements.
 */
enum ThzdtStatus thzdt_trace(const struct ThzdtScene *scene,
                             const char *tx,
                             const char *rx,
                             uint8_t max_order,
                             struct ThzdtMpc *paths,
                             size_t capacity,
                             size_t *len);

/**
 * Loads a trained model file.
 *
 * # Safety
 * `path` must be NUL-terminated and `model` writable.
 */
enum ThzdtStatus thzdt_model_load(const char *path, struct ThzdtModel **model);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from this library and not be used afterwards.
 */
void thzdt_model_free(struct ThzdtModel *model);

/**
 * Predicts the channel from node `tx` to the point `(x, y, z)`.
 *
 * # Safety
 * Handles must come from this library, `tx` be NUL-terminated and
 * `channel` writable.
 */
enum ThzdtStatus thzdt_model_predict(const struct ThzdtModel *model,
                                     const struct ThzdtScene *scene,
                                     const char *tx,
                                     double x,
                                     double y,
                                     double z,
                                     struct ThzdtChannel *channel);

/**
 * Radio map of node `tx` from the uncalibrated ray tracer, over the floor
 * plan tiled with cells of at most `cell_m` at height `z`.
 *
 * # Safety
 * `scene` must come from this library, `tx` be NUL-terminated and `map` writable.
 */
enum ThzdtStatus thzdt_radio_map_rt(const struct ThzdtScene *scene,
                                    const char *tx,
                                    uint8_t max_order,
                                    double cell_m,
                                    double z,
                                    struct ThzdtRadioMap **map);

/**
 * Radio map of node `tx` from the ray tracer with the calibration carried
 * by `model`.
 *
 * # Safety
 * Handles must come from this library, `tx` be NUL-terminated and `map` writable.
 */
enum ThzdtStatus thzdt_radio_map_calibrated_rt(const struct ThzdtModel *model,
                                               const struct ThzdtScene *scene,
                                               const char *tx,
                                               double cell_m,
                                               double z,
                                               struct ThzdtRadioMap **map);

/**
 * Radio map of node `tx` from the neural field.
 *
 * # Safety
 * Handles must come from this library, `tx` be NUL-terminated and `map` writable.
 */
enum ThzdtStatus thzdt_radio_map_inf(const struct ThzdtModel *model,
                                     const struct ThzdtScene *scene,
                                     const char *tx,
                                     double cell_m,
                                     double z,
                                     struct ThzdtRadioMap **map);

/**
 * Releases a radio map. Null is ignored.
 *
 * # Safety
 * `map` must be null or come from this library and not be used afterwards.
 */
void thzdt_radio_map_free(struct ThzdtRadioMap *map);

/**
 * Grid size of a map.
 *
 * # Safety
 * `map` must come from this library; `nx` and `ny` must be writable.
 */
enum ThzdtStatus thzdt_radio_map_dims(const struct ThzdtRadioMap *map, size_t *nx, size_t *ny);

/**
 * Propagation gain (dB) of every cell in row-major order (`iy * nx + ix`).
 *
 * # Safety
 * `map` must come from this library; `buf` must hold `capacity` doubles.
 */
enum ThzdtStatus thzdt_radio_map_power(const struct ThzdtRadioMap *map,
                                       double *buf,
                                       size_t capacity,
                                       size_t *len);

/**
 * SINR (dB) of every cell with `maps[0]` serving and the rest interfering.
 * All maps must share one grid and have distinct transmitters.
 *
 * # Safety
 * `maps` must hold `n_maps` handles from this library; `budget` must be
 * valid and `buf` hold `capacity` doubles.
 */
enum ThzdtStatus thzdt_sinr_map(const struct ThzdtRadioMap *const *maps,
                                size_t n_maps,
                                const struct ThzdtLinkBudget *budget,
                                double *buf,
                                size_t capacity,
                                size_t *len);

/**
 * Fraction of cells whose SINR reaches `threshold_db`, with `maps[0]` serving.
 * When `scene` is non-null, cells inside obstacles are excluded.
 *
 * # Safety
 * As for [`thzdt_sinr_map`]; `scene` may be null; `coverage` must be writable.
 */
enum ThzdtStatus thzdt_coverage(const struct ThzdtRadioMap *const *maps,
                                size_t n_maps,
                                const struct ThzdtScene *scene,
                                const struct ThzdtLinkBudget *budget,
                                double threshold_db,
                                double *coverage);

/**
 * SINR (dB) from a serving power and `n` interferer powers, all in dBm,
 * summed in the linear domain.
 *
 * # Safety
 * `interferers_dbm` must hold `n` doubles (may be null when `n` is 0).
 */
enum ThzdtStatus thzdt_sinr_from_powers(double signal_dbm,
                                        const double *interferers_dbm,
                                        size_t n,
                                        double noise_dbm,
                                        double *sinr_db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THZDT_H */
