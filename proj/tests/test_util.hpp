#pragma once

#include <filesystem>
#include <random>
#include <cmath>
#include <string>

#include "srim/image.hpp"

namespace srim::test {

// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("srim_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline ImageU8 random_u8(int h, int w, std::mt19937_64& rng) {
    ImageU8 img(h, w);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(d(rng));
    return img;
}

inline Image01 random_unit(int h, int w, std::mt19937_64& rng) {
    Image01 img(h, w);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (auto& v : img.data) v = d(rng);
    return img;
}

// Smooth colored blobs: something with structure for the feature nets.
inline ImageU8 smooth_u8(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double fx[3], fy[3], ph[3];
    for (int c = 0; c < 3; ++c) {
        fx[c] = 0.5 + 2.5 * u(rng);
        fy[c] = 0.5 + 2.5 * u(rng);
        ph[c] = 6.283 * u(rng);
    }
    ImageU8 img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = 0.5 + 0.4 * std::sin(fx[c] * 6.283 * x / w + ph[c]) * std::cos(fy[c] * 6.283 * y / h);
                img.at(y, x, c) = quantize(255.0 * v);
            }
        }
    }
    return img;
}

}  // namespace srim::test
