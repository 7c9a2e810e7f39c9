/* C interface to the score-driven epidemic model library.
 *
 * All functions return a status code: 0 on success, 1 on invalid arguments,
 * 2 on configuration errors, 3 on data errors, 4 on numeric failures.
 * sird_last_error() describes the most recent failure on this thread.
 * Objects are opaque handles owned by the caller and released with the
 * matching _free function.
 */
#ifndef SIRD_H
#define SIRD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SIRD_OK 0
#define SIRD_ERR_INVALID 1
#define SIRD_ERR_CONFIG 2
#define SIRD_ERR_DATA 3
#define SIRD_ERR_NUMERIC 4

typedef struct sird_dataset sird_dataset;
typedef struct sird_fit sird_fit;
typedef struct sird_forecast sird_forecast;

const char* sird_version(void);
const char* sird_last_error(void);

/* Full pipeline: executes one command ("simulate", "fit", "forecast",
 * "backtest", "evaluate") with a JSON configuration document and writes the
 * artifacts into the configured output directory. */
int sird_run(const char* command, const char* config_json);

/* --- datasets ------------------------------------------------------------ */

int sird_dataset_load_csv(const char* path, double population,
                          double start_threshold, sird_dataset** out);
int sird_dataset_simulate(const char* sim_spec_json, uint64_t seed,
                          sird_dataset** out);
int sird_dataset_write_csv(const sird_dataset* ds, const char* path);
long sird_dataset_length(const sird_dataset* ds);
/* Column names: "delta_c", "delta_rc", "delta_d", "infected", "susceptible".
 * Copies up to `cap` values into buf; returns the series length via *len. */
int sird_dataset_column(const sird_dataset* ds, const char* column, double* buf,
                        long cap, long* len);
void sird_dataset_free(sird_dataset* ds);

/* --- estimation ----------------------------------------------------------- */

/* config_json uses the same schema as the CLI configuration (model, mcmc,
 * seed, ...); the dataset handle replaces the data.csv path. */
int sird_fit_run(const sird_dataset* ds, const char* config_json, sird_fit** out);
long sird_fit_num_draws(const sird_fit* fit);
long sird_fit_num_params(const sird_fit* fit);
int sird_fit_param_name(const sird_fit* fit, long index, const char** name);
int sird_fit_draws(const sird_fit* fit, long param_index, double* buf, long cap,
                   long* len);
/* Posterior-median rate paths; `which` is "beta", "gamma", "nu" or "er". */
int sird_fit_rate_path(const sird_fit* fit, const char* which, double* buf,
                       long cap, long* len);
void sird_fit_free(sird_fit* fit);

/* --- forecasting ----------------------------------------------------------- */

int sird_forecast_run(const sird_fit* fit, int h_max, int reps_per_draw,
                      uint64_t seed, sird_forecast** out);
/* `target` is "confirmed" or "deaths"; `field` is "median", "mean", "lo", "hi". */
int sird_forecast_values(const sird_forecast* fc, const char* target,
                         const char* field, double* buf, long cap, long* len);
void sird_forecast_free(sird_forecast* fc);

#ifdef __cplusplus
}
#endif

#endif /* SIRD_H */
