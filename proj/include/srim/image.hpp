#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace srim {

inline constexpr int kChannels = 3;

/// RGB raster with 8-bit intensities, stored row-major with interleaved
/// channels (HWC).
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int h, int w, std::uint8_t fill = 0);

    std::uint8_t& at(int y, int x, int c) { return data[index(y, x, c)]; }
    std::uint8_t at(int y, int x, int c) const { return data[index(y, x, c)]; }
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
    }
    std::size_t size() const { return data.size(); }

    friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

/// RGB raster with real intensities nominally in [0,1], same layout as ImageU8.
struct Image01 {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image01() = default;
    Image01(int h, int w, double fill = 0.0);

    double& at(int y, int x, int c) { return data[index(y, x, c)]; }
    double at(int y, int x, int c) const { return data[index(y, x, c)]; }
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
    }
    std::size_t size() const { return data.size(); }

    friend bool operator==(const Image01&, const Image01&) = default;
};

Image01 to_unit(const ImageU8& img);

// Clamps to [0,1], scales by 255 and rounds half-up.
ImageU8 to_u8(const Image01& img);

std::uint8_t quantize(double value_0_255);

}  // namespace srim
