#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "srim/feature_space.hpp"
#include "srim/image.hpp"
#include "srim/run_config.hpp"

namespace srim {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,  // bad arguments or configuration
    kExitData = 2,   // missing/invalid files or data
    kExitDiverged = 3,
};

/// Entry point of the `srim` tool. Subcommands: prepare-data, train,
/// super-resolve, sample-multi, evaluate.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct TrainOptions {
    std::optional<std::filesystem::path> resume;
    std::int64_t stop_after = 0;  // 0: run to completion
};

int cmd_prepare_data(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_super_resolve(const RunConfig& config, const std::filesystem::path& checkpoint,
                      const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
                      std::ostream& out, std::ostream& err);
int cmd_sample_multi(const RunConfig& config, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& input, int count, const std::filesystem::path& out_dir,
                     std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint, const std::filesystem::path& test_dir,
                 const std::filesystem::path& report, bool with_truth, std::ostream& out, std::ostream& err);

/// Feature extractor for the configured backend at the given resolution.
FeatureExtractor make_feature_extractor(const RunConfig& config, int height, int width);

/// Side-by-side concatenation; all images must share a height.
ImageU8 horizontal_grid(const std::vector<ImageU8>& images);

}  // namespace srim
