#include "srim/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "srim/errors.hpp"

namespace srim {

std::string Tensor::shape_string() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor images_to_tensor(std::span<const Image01> images) {
    if (images.empty()) throw ArgumentError("no images to pack");
    const int h = images.front().height, w = images.front().width;
    Tensor t(static_cast<int>(images.size()), kChannels, h, w);
    for (int b = 0; b < t.n; ++b) {
        const Image01& img = images[static_cast<std::size_t>(b)];
        if (img.height != h || img.width != w) throw ArgumentError("images in a batch must share dimensions");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < kChannels; ++ch) t.at(b, ch, y, x) = img.at(y, x, ch);
    }
    return t;
}

Tensor image_to_tensor(const Image01& image) { return images_to_tensor(std::span(&image, 1)); }

Image01 tensor_to_image(const Tensor& t, int b) {
    if (t.c != kChannels) throw ArgumentError("tensor " + t.shape_string() + " is not a 3-channel image");
    Image01 img(t.h, t.w);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int ch = 0; ch < kChannels; ++ch) img.at(y, x, ch) = t.at(b, ch, y, x);
    return img;
}

Tensor slice_sample(const Tensor& t, int b) {
    Tensor out(1, t.c, t.h, t.w);
    const auto src = t.sample(b);
    std::copy(src.begin(), src.end(), out.data.begin());
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) {
        throw ArgumentError("cannot concatenate " + a.shape_string() + " with " + b.shape_string());
    }
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        auto dst = out.sample(i);
        const auto sa = a.sample(i);
        const auto sb = b.sample(i);
        std::copy(sa.begin(), sa.end(), dst.begin());
        std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<std::ptrdiff_t>(sa.size()));
    }
    return out;
}

Tensor leading_channels(const Tensor& t, int channels_a) {
    Tensor out(t.n, channels_a, t.h, t.w);
    for (int i = 0; i < t.n; ++i) {
        const auto src = t.sample(i);
        std::copy_n(src.begin(), out.sample(i).size(), out.sample(i).begin());
    }
    return out;
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace srim
