/* Public C interface of the SaS transfer-learning library.
 *
 * All entry points are exported from the shared library with C linkage so the
 * CLI and other language bindings stay ABI-stable. Objects cross the boundary
 * as opaque handles; failures come back as status codes with a human-readable
 * message copied into the caller's buffer.
 */
#ifndef SAS_SAS_H
#define SAS_SAS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SAS_API __declspec(dllexport)
#else
#define SAS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as CLI exit codes. */
typedef enum sas_status {
    SAS_OK = 0,
    SAS_ERR_CONFIG = 2,
    SAS_ERR_DATA = 3,
    SAS_ERR_NUMERIC = 4
} sas_status;

SAS_API const char* sas_version(void);
SAS_API const char* sas_status_name(sas_status status);

/* Adapter parameters introduced by one SaS configuration:
 * 2*(d_prime*d + M*r*d + L*r_prime*r). Returns 0 on invalid dimensions. */
SAS_API uint64_t sas_adapter_param_count(uint64_t d, uint64_t num_layers, uint64_t d_prime,
                                         uint64_t r_prime, uint64_t r, uint64_t m);

/* Performance-parameter trade-off score for a top-1 accuracy (percent) and an
 * adapter parameter count. */
SAS_API double sas_ppt_score(double top1_percent, uint64_t adapter_params);

/* Parsed experiment configuration (opaque). */
typedef struct sas_run_config sas_run_config;

SAS_API sas_status sas_run_config_open(const char* path, sas_run_config** out, char* errbuf,
                                       size_t errbuf_len);
SAS_API void sas_run_config_free(sas_run_config* cfg);

/* 16-hex config hash; buffer must hold at least 17 bytes. */
SAS_API sas_status sas_run_config_hash(const sas_run_config* cfg, char* out, size_t out_len);

/* Trains the toy foundation backbone described by cfg and writes the frozen
 * checkpoint. final_train_acc (percent) is optional. */
SAS_API sas_status sas_pretrain(const sas_run_config* cfg, const char* out_ckpt,
                                double* final_train_acc, char* errbuf, size_t errbuf_len);

/* Fine-tunes one variant (linear-probe | bias-only | shared-only |
 * shared-bias | full-sas) against a frozen backbone checkpoint and writes the
 * results table (CSV + JSONL). save_model_or_null optionally persists the
 * fine-tuned model. */
SAS_API sas_status sas_finetune(const sas_run_config* cfg, const char* variant,
                                const char* backbone_ckpt, const char* out_results,
                                const char* save_model_or_null, char* errbuf, size_t errbuf_len);

/* Evaluates a saved model checkpoint on the test split described by cfg;
 * writes top-1 percent into *top1. */
SAS_API sas_status sas_eval(const char* model_ckpt, const sas_run_config* cfg, double* top1,
                            char* errbuf, size_t errbuf_len);

/* Runs the M-sweep protocol: fine-tunes full-sas once per entry of the
 * comma-separated m_list and writes all rows to out_results. */
SAS_API sas_status sas_ablate_m(const sas_run_config* cfg, const char* m_list,
                                const char* backbone_ckpt, const char* out_results, char* errbuf,
                                size_t errbuf_len);

/* Finite-difference verification of every trainable scalar of a small
 * full-sas model in 64-bit mode. cfg may be NULL for the built-in small
 * configuration. Writes the max relative error and the number of scalars
 * checked. */
SAS_API sas_status sas_gradcheck(const sas_run_config* cfg_or_null, double* max_rel_err,
                                 uint64_t* scalars_checked, char* errbuf, size_t errbuf_len);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SAS_SAS_H */
