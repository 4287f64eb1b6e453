#include "voltkernel/voltkernel.h"

#include "voltkernel/control.hpp"
#include "voltkernel/errors.hpp"
#include "voltkernel/experiment.hpp"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <new>

struct vk_experiment {
    voltkernel::ExperimentConfig cfg;
};
struct vk_feeder {
    voltkernel::FeederModel model;
};
struct vk_ruleset {
    voltkernel::RuleSet rules;
};

namespace {

thread_local std::string g_message;
thread_local std::string g_json;

vk_status status_of(voltkernel::ErrorKind k) {
    using voltkernel::ErrorKind;
    switch (k) {
        case ErrorKind::invalid_argument: return VK_ERR_INVALID_ARGUMENT;
        case ErrorKind::dimension: return VK_ERR_DIMENSION;
        case ErrorKind::parse: return VK_ERR_PARSE;
        case ErrorKind::topology: return VK_ERR_TOPOLOGY;
        case ErrorKind::io: return VK_ERR_IO;
        case ErrorKind::solver: return VK_ERR_SOLVER;
        case ErrorKind::config: return VK_ERR_CONFIG;
    }
    return VK_ERR_INTERNAL;
}

vk_status fail(vk_status st, const std::string& message, nlohmann::ordered_json extra = {}) {
    g_message = message;
    nlohmann::ordered_json err{{"kind", vk_status_name(st)}, {"message", message}};
    for (auto it = extra.begin(); it != extra.end(); ++it) err[it.key()] = it.value();
    g_json = nlohmann::ordered_json{{"error", err}}.dump();
    return st;
}

template <class F>
vk_status guarded(F&& body) {
    g_message.clear();
    g_json.clear();
    try {
        body();
        return VK_OK;
    } catch (const voltkernel::SolverError& e) {
        return fail(VK_ERR_SOLVER, e.what(),
                    {{"primal_res", e.primal_res}, {"dual_res", e.dual_res}, {"gap", e.gap}});
    } catch (const voltkernel::Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(VK_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(VK_ERR_INTERNAL, e.what());
    }
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(const void* p, const char* what) {
    if (!p) throw voltkernel::InvalidArgument(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* vk_version(void) { return "0.1.0"; }

const char* vk_status_name(vk_status status) {
    switch (status) {
        case VK_OK: return "ok";
        case VK_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case VK_ERR_DIMENSION: return "dimension";
        case VK_ERR_PARSE: return "parse";
        case VK_ERR_TOPOLOGY: return "topology";
        case VK_ERR_IO: return "io";
        case VK_ERR_SOLVER: return "solver";
        case VK_ERR_CONFIG: return "config";
        case VK_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* vk_last_error(void) { return g_message.c_str(); }
const char* vk_last_error_json(void) { return g_json.c_str(); }

void vk_free_string(char* s) { std::free(s); }

vk_status vk_experiment_load(const char* config_path, vk_experiment** out) {
    return guarded([&] {
        require(config_path, "config_path");
        require(out, "out");
        *out = new vk_experiment{voltkernel::load_experiment_config(config_path)};
    });
}

void vk_experiment_free(vk_experiment* e) { delete e; }

vk_status vk_experiment_set_seed(vk_experiment* e, uint64_t seed) {
    return guarded([&] {
        require(e, "experiment");
        e->cfg.seed = seed;
    });
}

vk_status vk_experiment_output_dir(const vk_experiment* e, const char* out_dir, char** resolved) {
    return guarded([&] {
        require(e, "experiment");
        require(resolved, "resolved");
        std::optional<std::string> cli;
        if (out_dir) cli = out_dir;
        *resolved = dup(voltkernel::resolve_output_dir(e->cfg, cli).string());
    });
}

vk_status vk_experiment_run(const vk_experiment* e, const char* command, const char* out_dir, int force,
                            char** summary) {
    return guarded([&] {
        require(e, "experiment");
        require(command, "command");
        require(summary, "summary");
        std::optional<std::string> cli;
        if (out_dir) cli = out_dir;
        const auto dir = voltkernel::resolve_output_dir(e->cfg, cli);
        const std::string cmd = command;
        std::string s;
        if (cmd == "generate") s = voltkernel::run_generate(e->cfg, dir, force != 0);
        else if (cmd == "train") s = voltkernel::run_train(e->cfg, dir, force != 0);
        else if (cmd == "simulate") s = voltkernel::run_simulate(e->cfg, dir, force != 0);
        else throw voltkernel::InvalidArgument("unknown command '" + cmd + "'");
        *summary = dup(s);
    });
}

vk_status vk_feeder_load(const char* path, vk_feeder** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new vk_feeder{voltkernel::load_feeder(path)};
    });
}

void vk_feeder_free(vk_feeder* f) { delete f; }

vk_status vk_feeder_size(const vk_feeder* f, size_t* n) {
    return guarded([&] {
        require(f, "feeder");
        require(n, "n");
        *n = f->model.size();
    });
}

vk_status vk_feeder_power_flow(const vk_feeder* f, const double* p, const double* q, double* v_out) {
    return guarded([&] {
        require(f, "feeder");
        require(p, "p");
        require(q, "q");
        require(v_out, "v_out");
        const auto N = static_cast<Eigen::Index>(f->model.size());
        const voltkernel::VoltageProfile v = voltkernel::ac_power_flow(
            f->model, Eigen::Map<const Eigen::VectorXd>(p, N), Eigen::Map<const Eigen::VectorXd>(q, N));
        if (!v.converged) throw voltkernel::SolverError("power flow did not converge", 0, 0, 0);
        Eigen::Map<Eigen::VectorXd>(v_out, N) = v.v;
    });
}

vk_status vk_ruleset_load(const char* path, vk_ruleset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new vk_ruleset{voltkernel::load_ruleset(path)};
    });
}

vk_status vk_ruleset_from_json(const char* text, vk_ruleset** out) {
    return guarded([&] {
        require(text, "text");
        require(out, "out");
        *out = new vk_ruleset{voltkernel::ruleset_from_json(text)};
    });
}

vk_status vk_ruleset_to_json(const vk_ruleset* r, char** out) {
    return guarded([&] {
        require(r, "ruleset");
        require(out, "out");
        *out = dup(voltkernel::ruleset_to_json(r->rules));
    });
}

void vk_ruleset_free(vk_ruleset* r) { delete r; }

vk_status vk_ruleset_buses(const vk_ruleset* r, size_t* n) {
    return guarded([&] {
        require(r, "ruleset");
        require(n, "n");
        *n = r->rules.buses;
    });
}

vk_status vk_ruleset_input_size(const vk_ruleset* r, size_t* m) {
    return guarded([&] {
        require(r, "ruleset");
        require(m, "m");
        *m = r->rules.layout.size();
    });
}

vk_status vk_ruleset_dispatch(const vk_ruleset* r, const double* raw_inputs, size_t n_buses, size_t m,
                              const double* q_bar, double* q_out, int* clipped) {
    return guarded([&] {
        require(r, "ruleset");
        require(raw_inputs, "raw_inputs");
        require(q_bar, "q_bar");
        require(q_out, "q_out");
        if (n_buses != r->rules.buses) throw voltkernel::DimensionError("bus count differs from the rule set");
        if (m != r->rules.layout.size()) throw voltkernel::DimensionError("input size differs from the rule set");
        std::vector<Eigen::VectorXd> raw(n_buses);
        for (size_t n = 0; n < n_buses; ++n)
            raw[n] = Eigen::Map<const Eigen::VectorXd>(raw_inputs + n * m, static_cast<Eigen::Index>(m));
        const auto N = static_cast<Eigen::Index>(n_buses);
        const voltkernel::Dispatch d =
            voltkernel::eval_rules(r->rules, raw, Eigen::Map<const Eigen::VectorXd>(q_bar, N), "capi");
        Eigen::Map<Eigen::VectorXd>(q_out, N) = d.q_g;
        if (clipped)
            for (size_t n = 0; n < n_buses; ++n) clipped[n] = d.clipped[n] ? 1 : 0;
    });
}

}  // extern "C"
