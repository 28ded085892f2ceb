#include "srim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "srim/errors.hpp"
#include "srim/image_io.hpp"
#include "srim/resample.hpp"
#include "srim/rng.hpp"

namespace fs = std::filesystem;

namespace srim {

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_supported_image(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

ImagePair make_pair(std::string id, const ImageU8& source, int target_size, int scale_factor) {
    if (target_size < 1 || scale_factor < 1 || target_size % scale_factor != 0) {
        throw ArgumentError("target_size " + std::to_string(target_size) + " must be a positive multiple of " +
                            std::to_string(scale_factor));
    }
    ImagePair pair;
    pair.id = std::move(id);
    pair.target = anisotropic_resize(source, target_size, target_size);
    pair.input = downsample(pair.target, scale_factor);
    return pair;
}

DatasetSplit build_dataset(const fs::path& src_dir, const DatasetOptions& options) {
    if (!(options.split_fraction > 0.0 && options.split_fraction < 1.0)) {
        throw ArgumentError("split_fraction must lie in (0, 1)");
    }
    const auto files = list_images(src_dir);
    if (files.empty()) throw DataError("no images found in " + src_dir.string());
    if (files.size() < 2) throw DataError("need at least 2 images to split, found 1 in " + src_dir.string());

    std::set<std::string> ids;
    std::vector<std::string> names;
    for (const auto& f : files) {
        std::string id = f.stem().string() + ".png";
        if (!ids.insert(id).second) throw DataError("duplicate image basename: " + id);
        names.push_back(std::move(id));
    }

    std::vector<std::size_t> order(files.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(options.seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);

    const auto n = static_cast<long>(files.size());
    const long n_train = std::clamp(std::lround(options.split_fraction * static_cast<double>(n)), 1L, n - 1);

    DatasetSplit split;
    split.train.scale_factor = split.test.scale_factor = options.scale_factor;
    for (long k = 0; k < n; ++k) {
        const std::size_t i = order[static_cast<std::size_t>(k)];
        ImagePair pair = make_pair(names[i], load_image(files[i]), options.target_size, options.scale_factor);
        (k < n_train ? split.train : split.test).pairs.push_back(std::move(pair));
    }
    return split;
}

void write_dataset_cache(const DatasetSplit& split, const fs::path& out_dir) {
    fs::create_directories(out_dir / "lr");
    fs::create_directories(out_dir / "hr");
    std::ofstream manifest(out_dir / "manifest.txt", std::ios::binary);
    if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());
    manifest << "# scale_factor " << split.train.scale_factor << "\n";
    auto emit = [&](const PairedDataset& set, const char* label) {
        for (const auto& p : set.pairs) {
            save_png(p.input, out_dir / "lr" / p.id);
            save_png(p.target, out_dir / "hr" / p.id);
            manifest << p.id << ' ' << label << '\n';
        }
    };
    emit(split.train, "train");
    emit(split.test, "test");
    if (!manifest) throw IoError("error writing manifest in " + out_dir.string());
}

DatasetSplit load_dataset_cache(const fs::path& cache_dir) {
    std::ifstream manifest(cache_dir / "manifest.txt");
    if (!manifest) throw DataError("missing manifest.txt in " + cache_dir.string());
    DatasetSplit split;
    std::string line;
    int scale = 0;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        if (line[0] == '#') {
            std::string hash, key;
            fields >> hash >> key;
            if (key == "scale_factor") fields >> scale;
            continue;
        }
        std::string id, label;
        if (!(fields >> id >> label) || (label != "train" && label != "test")) {
            throw DataError("malformed manifest line: " + line);
        }
        ImagePair pair{id, load_image(cache_dir / "lr" / id), load_image(cache_dir / "hr" / id)};
        (label == "train" ? split.train : split.test).pairs.push_back(std::move(pair));
    }
    if (scale < 1) throw DataError("manifest lacks a scale_factor header");
    split.train.scale_factor = split.test.scale_factor = scale;
    for (const auto* set : {&split.train, &split.test}) {
        for (const auto& p : set->pairs) {
            if (p.target.height != p.input.height * scale || p.target.width != p.input.width * scale) {
                throw DataError("pair " + p.id + " violates the scale factor");
            }
        }
    }
    return split;
}

PairedDataset load_ground_truth_dir(const fs::path& dir, int scale_factor) {
    const auto files = list_images(dir);
    if (files.empty()) throw DataError("no images found in " + dir.string());
    PairedDataset set;
    set.scale_factor = scale_factor;
    for (const auto& f : files) {
        ImagePair pair;
        pair.id = f.stem().string() + ".png";
        pair.target = load_image(f);
        pair.input = downsample(pair.target, scale_factor);
        set.pairs.push_back(std::move(pair));
    }
    return set;
}

}  // namespace srim
