#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srim/image.hpp"

namespace srim {

/// Dense 4-d array in NCHW order.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t index(int b, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x;
    }
    double& at(int b, int ch, int y, int x) { return data[index(b, ch, y, x)]; }
    double at(int b, int ch, int y, int x) const { return data[index(b, ch, y, x)]; }

    std::span<double> sample(int b) { return {data.data() + static_cast<std::size_t>(b) * c * plane(), c * plane()}; }
    std::span<const double> sample(int b) const {
        return {data.data() + static_cast<std::size_t>(b) * c * plane(), c * plane()};
    }

    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Packs images (all the same size) into an N×3×H×W tensor.
Tensor images_to_tensor(std::span<const Image01> images);
Tensor image_to_tensor(const Image01& image);
Image01 tensor_to_image(const Tensor& t, int b = 0);

/// Copies sample b of t into a 1×C×H×W tensor.
Tensor slice_sample(const Tensor& t, int b);

/// Concatenates along the channel axis; all inputs share n, h, w.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Splits the gradient of concat_channels(a, b) back into its leading part
/// (first `channels_a` channels).
Tensor leading_channels(const Tensor& t, int channels_a);

bool all_finite(std::span<const double> values);

}  // namespace srim
