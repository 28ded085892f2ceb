#pragma once

#include <array>
#include <filesystem>

#include <json.hpp>

#include "srim/feature_space.hpp"
#include "srim/imle_trainer.hpp"

namespace srim {

/// Checkpoint = tensor archive (see archive.hpp) with
///
///   metadata.format            "srim-checkpoint"
///   metadata.version           1
///   metadata.generator         {conv_layers, kernel, hidden_channels, noise_channels, stages}
///   metadata.iteration         completed outer iterations
///   metadata.optimizer.step    optimizer step counter
///   metadata.config            echo of the run configuration (free-form)
///   metadata.feature           {backend, weights[3], checksum}
///   metadata.history           per-iteration records
///
/// and tensors named after trainable_arrays()/buffer_arrays()
/// ("lower.conv0.weight", "upper.bn7.running_var", ...) plus optimizer
/// moments under "optimizer.m.<name>" and "optimizer.v.<name>".
struct Checkpoint {
    TrainState state;
    nlohmann::json config = nlohmann::json::object();
    std::array<double, kFeatureComponents> feature_weights{1.0, 1.0, 1.0};
    std::string feature_checksum;
    std::string feature_backend;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws FormatError for malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError when the stored generator shape differs from `expected`.
void require_matching_config(const Checkpoint& checkpoint, const SubNetworkConfig& expected);

nlohmann::json to_json(const SubNetworkConfig& config);
SubNetworkConfig sub_network_from_json(const nlohmann::json& j);

}  // namespace srim
