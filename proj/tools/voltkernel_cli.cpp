// voltkernel generate|train|simulate --config <file> [--out <dir>] [--force] [--seed-override <n>]

#include "voltkernel/voltkernel.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

// Exit codes: 2 usage/config, 3 I/O, 4 solver, 1 anything else.
int exit_code(vk_status st) {
    switch (st) {
        case VK_OK: return 0;
        case VK_ERR_CONFIG:
        case VK_ERR_INVALID_ARGUMENT: return 2;
        case VK_ERR_IO: return 3;
        case VK_ERR_SOLVER: return 4;
        default: return 1;
    }
}

int report_failure(vk_status st) {
    std::fprintf(stderr, "%s\n", vk_last_error_json());
    return exit_code(st);
}

// Usage errors from argument parsing, in the same JSON shape.
int usage_failure(const std::string& message) {
    std::string escaped;
    for (char c : message) {
        if (c == '"' || c == '\\') escaped += '\\';
        if (c == '\n') {
            escaped += "\\n";
            continue;
        }
        escaped += c;
    }
    std::fprintf(stderr, "{\"error\":{\"kind\":\"usage\",\"message\":\"%s\"}}\n", escaped.c_str());
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel-based reactive power control rules for distribution feeders"};
    app.require_subcommand(1);
    app.set_version_flag("--version", vk_version());

    std::string config;
    std::string out;
    bool force = false;
    std::uint64_t seed = 0;
    for (const char* name : {"generate", "train", "simulate"}) {
        CLI::App* sub = app.add_subcommand(name, std::string(name) == "generate" ? "Synthesize load and solar profiles"
                                                 : std::string(name) == "train"  ? "Train rules on one window"
                                                                                 : "Run the rolling-horizon experiment");
        sub->add_option("--config", config, "Experiment config (JSON)")->required();
        sub->add_option("--out", out, "Output directory (overrides $VOLTKERNEL_OUT and the config)");
        sub->add_flag("--force", force, "Replace existing output files");
        sub->add_option("--seed-override", seed, "Replace the config seed");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return usage_failure(e.what());
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const bool seed_given = app.get_subcommands().front()->count("--seed-override") > 0;

    vk_experiment* exp = nullptr;
    if (vk_status st = vk_experiment_load(config.c_str(), &exp); st != VK_OK) return report_failure(st);
    if (seed_given) {
        if (vk_status st = vk_experiment_set_seed(exp, seed); st != VK_OK) {
            vk_experiment_free(exp);
            return report_failure(st);
        }
    }
    char* summary = nullptr;
    const vk_status st = vk_experiment_run(exp, command.c_str(), out.empty() ? nullptr : out.c_str(), force ? 1 : 0,
                                           &summary);
    vk_experiment_free(exp);
    if (st != VK_OK) return report_failure(st);
    std::printf("%s\n", summary);
    vk_free_string(summary);
    return 0;
}
