#ifndef VOLTKERNEL_H
#define VOLTKERNEL_H

/* C interface to voltkernel. Every call returns a vk_status; on failure the
 * calling thread's last error (message and a JSON description) is set.
 * Strings returned through char** are owned by the caller and released with
 * vk_free_string. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define VK_API __declspec(dllexport)
#else
#define VK_API __attribute__((visibility("default")))
#endif

typedef enum vk_status {
    VK_OK = 0,
    VK_ERR_INVALID_ARGUMENT = 1,
    VK_ERR_DIMENSION = 2,
    VK_ERR_PARSE = 3,
    VK_ERR_TOPOLOGY = 4,
    VK_ERR_IO = 5,
    VK_ERR_SOLVER = 6,
    VK_ERR_CONFIG = 7,
    VK_ERR_INTERNAL = 8
} vk_status;

typedef struct vk_experiment vk_experiment;
typedef struct vk_feeder vk_feeder;
typedef struct vk_ruleset vk_ruleset;

VK_API const char* vk_version(void);
VK_API const char* vk_status_name(vk_status status);

/* Message of the last failed call on this thread ("" when none). */
VK_API const char* vk_last_error(void);
/* {"error":{"kind":...,"message":...}} plus solver residuals when known. */
VK_API const char* vk_last_error_json(void);

VK_API void vk_free_string(char* s);

/* Experiments driven by a JSON config file. */
VK_API vk_status vk_experiment_load(const char* config_path, vk_experiment** out);
VK_API void vk_experiment_free(vk_experiment* e);
VK_API vk_status vk_experiment_set_seed(vk_experiment* e, uint64_t seed);
/* out_dir may be NULL: then $VOLTKERNEL_OUT, else the config's output_dir. */
VK_API vk_status vk_experiment_output_dir(const vk_experiment* e, const char* out_dir, char** resolved);
/* command is "generate", "train" or "simulate"; summary is a JSON object. */
VK_API vk_status vk_experiment_run(const vk_experiment* e, const char* command, const char* out_dir, int force,
                                   char** summary);

/* Feeder models. */
VK_API vk_status vk_feeder_load(const char* path, vk_feeder** out);
VK_API void vk_feeder_free(vk_feeder* f);
VK_API vk_status vk_feeder_size(const vk_feeder* f, size_t* n);
/* Voltage magnitudes of buses 1..N for injections p, q (length N each). */
VK_API vk_status vk_feeder_power_flow(const vk_feeder* f, const double* p, const double* q, double* v_out);

/* Trained rule sets. */
VK_API vk_status vk_ruleset_load(const char* path, vk_ruleset** out);
VK_API vk_status vk_ruleset_from_json(const char* text, vk_ruleset** out);
VK_API vk_status vk_ruleset_to_json(const vk_ruleset* r, char** out);
VK_API void vk_ruleset_free(vk_ruleset* r);
VK_API vk_status vk_ruleset_buses(const vk_ruleset* r, size_t* n);
VK_API vk_status vk_ruleset_input_size(const vk_ruleset* r, size_t* m);
/* Clamped dispatch. raw_inputs holds n_buses rows of m raw measurements
 * (row-major); q_bar and q_out have n_buses entries; clipped may be NULL. */
VK_API vk_status vk_ruleset_dispatch(const vk_ruleset* r, const double* raw_inputs, size_t n_buses, size_t m,
                                     const double* q_bar, double* q_out, int* clipped);

#ifdef __cplusplus
}
#endif

#endif
