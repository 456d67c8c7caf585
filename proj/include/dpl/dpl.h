/* Copyright 2026 The DPL Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the prompt search library. Objects are opaque handles owned
 * by the caller and released with the matching *_free function. Every call
 * returns a dpl_status; on failure dpl_last_error() describes the problem for
 * the calling thread. Configuration crosses the boundary as JSON text; a NULL
 * or empty string means "all defaults".
 *
 * Functions that produce text take (buf, cap, needed): the text plus its NUL
 * terminator is copied when it fits in cap bytes, and *needed always receives
 * the required size, so a first call with cap = 0 can size the buffer.
 */
#ifndef DPL_DPL_H_
#define DPL_DPL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DPL_API __declspec(dllexport)
#else
#define DPL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dpl_status {
  DPL_OK = 0,
  DPL_ERR_INVALID_ARGUMENT = 1, /* contract violation, bad config, NULL handle */
  DPL_ERR_DIMENSION = 2,        /* shape mismatch between model, task and prompts */
  DPL_ERR_IO = 3,               /* file could not be read or written */
  DPL_ERR_FORMAT = 4,           /* file or JSON is malformed */
  DPL_ERR_GENERATION = 5,       /* planted task could not be verified */
  DPL_ERR_INTERNAL = 6
} dpl_status;

typedef struct dpl_model dpl_model;
typedef struct dpl_task dpl_task;
typedef struct dpl_search dpl_search;
typedef struct dpl_prompts dpl_prompts;

DPL_API const char* dpl_version(void);
/* Message of the last failed call on this thread; "" after a success. */
DPL_API const char* dpl_last_error(void);
DPL_API const char* dpl_status_name(dpl_status status);

/* Fills every missing setting of a run configuration with its default.
 * Input and output: {"model": {...}, "task": {...}, "space": "0,2,4,6",
 * "search": {...}, "train": {...}}; a "random" planted configuration is
 * replaced by the one it draws. */
DPL_API dpl_status dpl_resolve_config(const char* run_json, char* buf, size_t cap, size_t* needed);

/* Frozen backbone. config_json: {"seed", "text": {...}, "image": {...},
 * "embed_dim", "tau", "ln_eps"}. */
DPL_API dpl_status dpl_model_create(const char* config_json, dpl_model** out);
DPL_API dpl_status dpl_model_load(const char* path, dpl_model** out);
DPL_API dpl_status dpl_model_save(const dpl_model* model, const char* path);
DPL_API dpl_status dpl_model_checksum(const dpl_model* model, uint64_t* out);
DPL_API dpl_status dpl_model_config_json(const dpl_model* model, char* buf, size_t cap, size_t* needed);
DPL_API void dpl_model_free(dpl_model* model);

/* Synthetic few-shot task. params_json: {"num_labels", "shots", "seed",
 * "noise", "planted": null | "random" | {"text", "image", "space"}, ...}. */
DPL_API dpl_status dpl_task_generate(const dpl_model* model, const char* params_json, dpl_task** out);
DPL_API dpl_status dpl_task_load(const char* path, dpl_task** out);
DPL_API dpl_status dpl_task_save(const dpl_task* task, const char* path);
DPL_API dpl_status dpl_task_checksum(const dpl_task* task, uint64_t* out);
DPL_API dpl_status dpl_task_info_json(const dpl_task* task, char* buf, size_t cap, size_t* needed);
DPL_API void dpl_task_free(dpl_task* task);

/* Bilevel search. space: "0,2,4,6". search_json: {"epochs", "batch_size",
 * "lr_alpha", "lr_prompts", "seed", "delta", "epsilon"}. */
DPL_API dpl_status dpl_search_run(const dpl_model* model, const dpl_task* task, const char* space,
                                  const char* search_json, dpl_search** out);
/* Searched configuration as {"image": [...], "space": [...], "text": [...]}. */
DPL_API dpl_status dpl_search_config_json(const dpl_search* search, char* buf, size_t cap, size_t* needed);
/* Final alpha difference and dominant counts per branch. */
DPL_API dpl_status dpl_search_summary_json(const dpl_search* search, char* buf, size_t cap, size_t* needed);
/* config.json, alpha_trace_text.csv, alpha_trace_image.csv, metrics.csv. */
DPL_API dpl_status dpl_search_write(const dpl_search* search, const char* out_dir);
DPL_API void dpl_search_free(dpl_search* search);

/* Training stage for a configuration JSON. train_json: {"epochs",
 * "batch_size", "lr", "lambda", "distill", "seed"}. */
DPL_API dpl_status dpl_train_run(const dpl_model* model, const dpl_task* task, const char* prompt_config_json,
                                 const char* train_json, dpl_prompts** out);
DPL_API dpl_status dpl_prompts_save(const dpl_prompts* prompts, const char* path);
DPL_API dpl_status dpl_prompts_load(const dpl_model* model, const char* path, dpl_prompts** out);
/* Per-epoch mean loss as CSV (epoch,train_loss); empty history for loaded prompts. */
DPL_API dpl_status dpl_prompts_write_history(const dpl_prompts* prompts, const char* path);
DPL_API dpl_status dpl_prompts_num_params(const dpl_prompts* prompts, uint64_t* out);
DPL_API void dpl_prompts_free(dpl_prompts* prompts);

/* Test-split accuracy; prompts may be NULL for the zero-shot model. */
DPL_API dpl_status dpl_evaluate(const dpl_model* model, const dpl_task* task, const dpl_prompts* prompts,
                                double* accuracy);
/* Length-16 prompt at the first layer of both branches, trained and evaluated. */
DPL_API dpl_status dpl_shallow_baseline(const dpl_model* model, const dpl_task* task, const char* train_json,
                                        double* accuracy);

/* Human-readable summary of any artifact written by this library. */
DPL_API dpl_status dpl_inspect(const char* path, char* buf, size_t cap, size_t* needed);

/* Number of configurations, as a decimal string (it overflows 64 bits for
 * deep models). */
DPL_API dpl_status dpl_search_space_size(const char* space, size_t depth_text, size_t depth_image, char* buf,
                                         size_t cap, size_t* needed);
DPL_API dpl_status dpl_subprompt_params(const char* prompt_config_json, size_t dim_text, size_t dim_image,
                                        uint64_t* out);

#ifdef __cplusplus
}
#endif

#endif /* DPL_DPL_H_ */
