#include "srim/image.hpp"

#include <algorithm>
#include <cmath>

namespace srim {

ImageU8::ImageU8(int h, int w, std::uint8_t fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

Image01::Image01(int h, int w, double fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

std::uint8_t quantize(double v) {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

Image01 to_unit(const ImageU8& img) {
    Image01 out(img.height, img.width);
    std::transform(img.data.begin(), img.data.end(), out.data.begin(),
                   [](std::uint8_t v) { return v / 255.0; });
    return out;
}

ImageU8 to_u8(const Image01& img) {
    ImageU8 out(img.height, img.width);
    std::transform(img.data.begin(), img.data.end(), out.data.begin(),
                   [](double v) { return quantize(v * 255.0); });
    return out;
}

}  // namespace srim
