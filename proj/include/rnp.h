/*
 * C API for the risk-neutral projection library.
 *
 * All functions return RNP_OK (0) on success or a nonzero error code; the
 * message for the most recent failure on the calling thread is available
 * via rnp_last_error(). Strings returned through char** out-parameters are
 * heap-allocated and must be released with rnp_string_free().
 */
#ifndef RNP_H
#define RNP_H

#include <stdint.h>

#if defined(_WIN32)
#define RNP_API __declspec(dllexport)
#else
#define RNP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum rnp_status {
    RNP_OK = 0,
    RNP_ERR_VALIDATION = 2, /* malformed inputs, domain violations */
    RNP_ERR_NUMERICAL = 3,  /* solver failures */
    RNP_ERR_INTERNAL = 5
};

typedef struct rnp_quotes rnp_quotes;       /* univariate option market */
typedef struct rnp_fx_market rnp_fx_market; /* three-pair FX market */

RNP_API const char* rnp_version(void);
RNP_API const char* rnp_last_error(void);
RNP_API void rnp_string_free(char* s);

/*
 * Quotes JSON:
 *   { "gross_rate": 1.05, "forward": 105.1,
 *     "puts":  [[strike, price], ...],
 *     "calls": [[strike, price], ...] }
 */
RNP_API int rnp_quotes_parse_json(const char* json_text, rnp_quotes** out);
RNP_API void rnp_quotes_free(rnp_quotes* q);

/*
 * Moment estimation. Request JSON:
 *   { "payoff": "svix" | "vix" | "power:2" | "indicator:1.0" | "file",
 *     "payoff_points": [[s, g], ...]        (payoff == "file")
 *     "bounds": [a_min, a_max],             (default: strike range +/- 50%)
 *     "grid_points": 2001,
 *     "maturity": 1.0,                      (svix/vix)
 *     "method": "ols" | "wls" | "constrained",
 *     "wls_scale": 0.1,
 *     "payoff_nonneg": true,
 *     "weight_floor": 10.0 }
 * Result JSON carries the estimate, the replicating portfolio, diagnostics
 * and the full configuration echo.
 */
RNP_API int rnp_estimate_moment(const rnp_quotes* q, const char* request_json,
                                char** result_json);

/*
 * Distribution estimation. Request JSON adds "eval_points" (count) and
 * "rearrange" (bool). Returns CSV (x, cdf, pdf, monotonized) and a meta JSON.
 */
RNP_API int rnp_estimate_distribution(const rnp_quotes* q, const char* request_json,
                                      char** result_csv, char** meta_json);

/*
 * FX market JSON:
 *   { "spot1": ..., "spot2": ...,
 *     "gross_usd": ..., "gross_gbp": ..., "gross_eur": ...,
 *     "calls1": [[K, px_usd], ...], "calls2": [[K, px_usd], ...],
 *     "cross_calls": [[K, px_gbp], ...] }
 */
RNP_API int rnp_fx_market_parse_json(const char* json_text, rnp_fx_market** out);
RNP_API void rnp_fx_market_free(rnp_fx_market* m);

/*
 * FX dependence. Request JSON:
 *   { "grid1": {"lo":..., "hi":..., "n":201},
 *     "grid2": {"lo":..., "hi":..., "n":201},
 *     "tail": [[q1, q2], ...] }
 * Result JSON: covariance, correlation, per-leg variances, tail
 * probabilities (clipped and raw), cross-check value of the cross-call sum
 * under both discounting conventions, config echo.
 */
RNP_API int rnp_fx_dependence(const rnp_fx_market* m, const char* request_json,
                              char** result_json);

/* Option-chain cleaning: CSV in, cleaned CSV out. */
RNP_API int rnp_clean_chain_csv(const char* csv_text, char** cleaned_csv);

/* FX smile pillars CSV in, five-strike quote CSV out. */
RNP_API int rnp_expand_fx_smile_csv(const char* pillars_csv, char** quotes_csv);

/*
 * Run a simulation study. config_json mirrors the experiment configuration;
 * seed overrides the config seed; results.csv / summary.csv / meta.json are
 * written into out_dir. The meta JSON is also returned.
 */
RNP_API int rnp_run_study(const char* config_json, uint64_t seed, const char* out_dir,
                          char** meta_json);

/* Built-in default configuration for a study name. */
RNP_API int rnp_default_study_config(const char* study, char** config_json);

#ifdef __cplusplus
}
#endif

#endif /* RNP_H */
