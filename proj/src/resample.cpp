#include "srim/resample.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "srim/errors.hpp"

namespace srim {
namespace {

struct Tap {
    int index;
    double weight;
};

// Contribution lists for every output coordinate along one axis.
std::vector<std::vector<Tap>> axis_taps(int in_size, int out_size) {
    const double scale = static_cast<double>(out_size) / in_size;
    const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
    const double support = 2.0 * stretch;
    std::vector<std::vector<Tap>> taps(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) / scale - 0.5;
        const int lo = static_cast<int>(std::floor(center - support)) + 1;
        const int hi = static_cast<int>(std::ceil(center + support)) - 1;
        double total = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double w = cubic_kernel((i - center) / stretch);
            if (w == 0.0) continue;
            taps[o].push_back({std::clamp(i, 0, in_size - 1), w});
            total += w;
        }
        for (auto& t : taps[o]) t.weight /= total;
    }
    return taps;
}

}  // namespace

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

Image01 resize_bicubic(const Image01& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) {
        throw ArgumentError("resize target must be positive, got " + std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    if (img.height < 1 || img.width < 1) throw ArgumentError("cannot resize an empty image");
    const auto xs = axis_taps(img.width, out_w);
    const auto ys = axis_taps(img.height, out_h);

    Image01 rows(img.height, out_w);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < kChannels; ++c) {
                double acc = 0.0;
                for (const Tap& t : xs[x]) acc += t.weight * img.at(y, t.index, c);
                rows.at(y, x, c) = acc;
            }
        }
    }
    Image01 out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < kChannels; ++c) {
                double acc = 0.0;
                for (const Tap& t : ys[y]) acc += t.weight * rows.at(t.index, x, c);
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

ImageU8 anisotropic_resize(const ImageU8& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) {
        throw ArgumentError("resize target must be positive, got " + std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    if (img.height == out_h && img.width == out_w) return img;
    Image01 src(img.height, img.width);
    std::copy(img.data.begin(), img.data.end(), src.data.begin());
    const Image01 resized = resize_bicubic(src, out_h, out_w);
    ImageU8 out(out_h, out_w);
    std::transform(resized.data.begin(), resized.data.end(), out.data.begin(), quantize);
    return out;
}

ImageU8 downsample(const ImageU8& img, int factor) {
    if (factor < 1) throw ArgumentError("downsample factor must be >= 1");
    if (img.height % factor != 0 || img.width % factor != 0) {
        throw ArgumentError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                            " is not divisible by factor " + std::to_string(factor));
    }
    return anisotropic_resize(img, img.height / factor, img.width / factor);
}

ImageU8 bicubic_upscale(const ImageU8& img, int factor) {
    if (factor < 1) throw ArgumentError("upscale factor must be >= 1");
    return anisotropic_resize(img, img.height * factor, img.width * factor);
}

}  // namespace srim
