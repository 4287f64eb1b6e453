#pragma once

// Config-driven experiments behind the `generate`, `train` and `simulate`
// commands.

#include "voltkernel/scenario.hpp"
#include "voltkernel/sim.hpp"
#include "voltkernel/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace voltkernel {

struct SweepSpec {
    ControllerId controller = ControllerId::C4;
    SweepParam param = SweepParam::tau;
    std::vector<double> values;
};

struct ExperimentConfig {
    std::filesystem::path feeder;
    std::optional<std::filesystem::path> profiles;  // exactly one of profiles / generator
    std::optional<GeneratorConfig> generator;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;

    std::vector<std::size_t> remote_lines;
    bool local_inputs = true;
    bool normalize = true;

    TrainConfig train;
    Window train_window{0, 30};  // rows used by `train`

    SimConfig sim;
    std::optional<SweepSpec> sweep;
};

/// Parses the JSON config. Relative paths resolve against `base_dir`.
/// Unknown keys, wrong types, missing required keys and missing files raise
/// ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Output directory: explicit override, else $VOLTKERNEL_OUT, else the config.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::string>& cli_out);

/// Each command writes into `out_dir` and returns a JSON summary. Existing
/// output files are never appended to or replaced unless `force` is set.
std::string run_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool force);
std::string run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool force);
std::string run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool force);

}  // namespace voltkernel
