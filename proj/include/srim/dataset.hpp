#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srim/image.hpp"

namespace srim {

struct ImagePair {
    std::string id;  // basename of the cached PNG, e.g. "cat01.png"
    ImageU8 input;
    ImageU8 target;
};

/// Low/high resolution pairs. Every target is exactly scale_factor times the
/// size of its input.
struct PairedDataset {
    std::vector<ImagePair> pairs;
    int scale_factor = 4;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

struct DatasetSplit {
    PairedDataset train;
    PairedDataset test;
};

struct DatasetOptions {
    int target_size = 256;
    int scale_factor = 4;
    double split_fraction = 0.9;  // share of images assigned to the training split
    std::uint64_t seed = 0;
};

/// Sorted list of the PNG/JPEG files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Builds the pair for one ground-truth source: anisotropic resize to
/// target_size² and bicubic downsampling by scale_factor.
ImagePair make_pair(std::string id, const ImageU8& source, int target_size, int scale_factor);

/// Loads every image in src_dir and splits them into disjoint train/test sets.
/// The split is a seeded shuffle of the sorted file names followed by a prefix
/// cut, so it does not depend on directory enumeration order.
DatasetSplit build_dataset(const std::filesystem::path& src_dir, const DatasetOptions& options);

/// Writes `<out>/lr/<id>`, `<out>/hr/<id>` and `<out>/manifest.txt`, one
/// "<id> <train|test>" line per pair in train-then-test order.
void write_dataset_cache(const DatasetSplit& split, const std::filesystem::path& out_dir);

DatasetSplit load_dataset_cache(const std::filesystem::path& cache_dir);

/// Pairs from every PNG/JPEG in a directory of ground-truth images without
/// splitting (used for evaluation folders).
PairedDataset load_ground_truth_dir(const std::filesystem::path& dir, int scale_factor);

}  // namespace srim
