#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "srim/feature_space.hpp"
#include "srim/generator.hpp"
#include "srim/imle_trainer.hpp"

namespace srim {

/// Merged run configuration. Sources, lowest precedence first: built-in
/// defaults, a flat "key = value" file, SRIM_<KEY> environment variables and
/// --key value command-line options. Unknown keys are rejected everywhere.
struct RunConfig {
    // data
    std::string data_dir;
    std::string cache_dir = "data_cache";
    std::string output_dir = "run";
    int target_size = 256;
    double split_fraction = 0.9;

    // generator
    SubNetworkConfig generator;

    // feature space
    FeatureBackend feature_backend = FeatureBackend::fixed_random_convnet;
    std::string feature_weights;
    int projection_dim = 2048;  // 0 disables projection
    int calibration_images = 16;

    // training
    TrainConfig train;
    int checkpoint_every = 100;

    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;

    /// Names of every accepted key, sorted.
    static std::vector<std::string> keys();

    /// Throws ConfigError for unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    /// Throws ConfigError when the configuration is inconsistent.
    void validate() const;

    /// Threads after applying --deterministic.
    int effective_threads() const { return deterministic ? 1 : threads; }

    /// Sorted "key = value" lines.
    std::string echo() const;
    std::map<std::string, std::string> as_map() const;
};

inline constexpr const char* kEnvPrefix = "SRIM_";

/// Parses "key = value" lines; blank lines and lines starting with '#' are
/// ignored. Throws ConfigError on malformed lines or unknown keys.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source = "<text>");

/// Applies SRIM_<KEY> environment overrides for every known key.
void apply_environment(RunConfig& config);

/// Train-loop hyperparameters with the root seed and thread policy applied.
TrainConfig make_train_config(const RunConfig& config);

/// Purpose-specific seeds split from the root seed.
std::uint64_t feature_seed(const RunConfig& config);
std::uint64_t projection_seed(const RunConfig& config);
std::uint64_t sampling_seed(const RunConfig& config);

}  // namespace srim
