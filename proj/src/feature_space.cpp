#include "srim/feature_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Core>

#include "srim/archive.hpp"
#include "srim/errors.hpp"
#include "srim/rng.hpp"

namespace srim {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};

Tensor layer_forward(const FeatureLayer& layer, const Tensor& x) {
    return std::visit(Overloaded{[&](const Conv2d& conv) { return conv2d_forward(conv, x); },
                                 [&](const ReluLayer&) { return relu_forward(x); },
                                 [&](const MaxPoolLayer&) { return maxpool2_forward(x); },
                                 [&](const AvgPoolLayer&) { return avgpool2_forward(x); }},
                      layer);
}

Tensor layer_backward(const FeatureLayer& layer, const Tensor& x, const Tensor& dy) {
    return std::visit(Overloaded{[&](const Conv2d& conv) { return conv2d_backward(conv, x, dy, nullptr, true); },
                                 [&](const ReluLayer&) { return relu_backward(x, dy); },
                                 [&](const MaxPoolLayer&) { return maxpool2_backward(x, dy); },
                                 [&](const AvgPoolLayer&) { return avgpool2_backward(x, dy); }},
                      layer);
}

// Channel count and spatial divisor of each layer's output.
struct LayerShape {
    int channels;
    int divisor;
};

std::vector<LayerShape> output_shapes(const FeatureNet& net) {
    std::vector<LayerShape> shapes;
    LayerShape cur{kChannels, 1};
    for (const auto& layer : net.layers) {
        if (const auto* conv = std::get_if<Conv2d>(&layer)) cur.channels = conv->out_channels;
        if (std::holds_alternative<MaxPoolLayer>(layer) || std::holds_alternative<AvgPoolLayer>(layer)) cur.divisor *= 2;
        shapes.push_back(cur);
    }
    return shapes;
}

std::string weights_checksum(const FeatureNet& net) {
    std::vector<unsigned char> bytes;
    for (const auto& layer : net.layers) {
        if (const auto* conv = std::get_if<Conv2d>(&layer)) {
            for (const auto* arr : {&conv->weight, &conv->bias}) {
                const auto* p = reinterpret_cast<const unsigned char*>(arr->data());
                bytes.insert(bytes.end(), p, p + arr->size() * sizeof(double));
            }
        }
    }
    return sha256_hex(bytes);
}

void finalize(FeatureExtractor& ex, int height, int width) {
    if (height < 1 || width < 1 || height % ex.net.downsampling != 0 || width % ex.net.downsampling != 0) {
        throw ArgumentError("feature extractor input " + std::to_string(height) + "x" + std::to_string(width) +
                            " must be positive multiples of " + std::to_string(ex.net.downsampling));
    }
    ex.input_height = height;
    ex.input_width = width;
    ex.checksum = weights_checksum(ex.net);
}

void add_conv(FeatureNet& net, std::string name, int in, int out) {
    net.layer_names.push_back(std::move(name));
    net.layers.emplace_back(Conv2d(in, out, 3));
}

void add_plain(FeatureNet& net, FeatureLayer layer) {
    net.layer_names.emplace_back();
    net.layers.push_back(std::move(layer));
}

struct VggConv {
    const char* name;
    int in, out;
};

FeatureNet vgg19_skeleton() {
    FeatureNet net;
    const std::vector<std::vector<VggConv>> blocks{
        {{"conv1_1", 3, 64}, {"conv1_2", 64, 64}},
        {{"conv2_1", 64, 128}, {"conv2_2", 128, 128}},
        {{"conv3_1", 128, 256}, {"conv3_2", 256, 256}, {"conv3_3", 256, 256}, {"conv3_4", 256, 256}},
        {{"conv4_1", 256, 512}, {"conv4_2", 512, 512}, {"conv4_3", 512, 512}, {"conv4_4", 512, 512}},
    };
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (const auto& c : blocks[b]) {
            add_conv(net, c.name, c.in, c.out);
            if (std::string(c.name) == "conv2_2") net.taps[0] = net.layers.size() - 1;
            if (std::string(c.name) == "conv4_4") {
                net.taps[1] = net.layers.size() - 1;
                break;
            }
            add_plain(net, ReluLayer{});
        }
        if (b + 1 < blocks.size()) add_plain(net, MaxPoolLayer{});
    }
    net.downsampling = 8;
    return net;
}

void check_image_batch(const FeatureExtractor& ex, const Tensor& images) {
    if (images.c != kChannels || images.h != ex.input_height || images.w != ex.input_width) {
        throw ArgumentError("feature extractor expects 3x" + std::to_string(ex.input_height) + "x" +
                            std::to_string(ex.input_width) + " images, got " + images.shape_string());
    }
}

}  // namespace

std::string to_string(FeatureBackend backend) {
    return backend == FeatureBackend::pretrained_deep_net ? "pretrained-deep-net" : "fixed-random-convnet";
}

FeatureBackend parse_feature_backend(const std::string& name) {
    if (name == "pretrained-deep-net") return FeatureBackend::pretrained_deep_net;
    if (name == "fixed-random-convnet") return FeatureBackend::fixed_random_convnet;
    throw ArgumentError("unknown feature backend '" + name + "'");
}

std::array<std::size_t, kFeatureComponents> FeatureExtractor::component_lengths() const {
    const auto shapes = output_shapes(net);
    const std::size_t pixels = static_cast<std::size_t>(input_height) * input_width;
    std::array<std::size_t, kFeatureComponents> lengths{};
    lengths[0] = pixels * kChannels;
    for (int t = 0; t < 2; ++t) {
        const LayerShape s = shapes[net.taps[t]];
        lengths[t + 1] = pixels / (static_cast<std::size_t>(s.divisor) * s.divisor) * s.channels;
    }
    return lengths;
}

std::size_t FeatureExtractor::dimension() const {
    const auto l = component_lengths();
    return std::accumulate(l.begin(), l.end(), std::size_t{0});
}

Tensor preprocess_for_deep_net(const Tensor& images01) {
    if (images01.c != kChannels) throw ArgumentError("expected a 3-channel image tensor");
    Tensor out = images01;
    for (int b = 0; b < out.n; ++b) {
        for (int ch = 0; ch < kChannels; ++ch) {
            double* p = &out.data[out.index(b, ch, 0, 0)];
            for (std::size_t i = 0; i < out.plane(); ++i) {
                if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw ArgumentError("pixel value outside [0,1]");
                p[i] = p[i] * 255.0 - kImageNetMean[ch];
            }
        }
    }
    return out;
}

Tensor preprocess_for_deep_net(const Image01& img) { return preprocess_for_deep_net(image_to_tensor(img)); }

FeatureExtractor make_random_convnet_extractor(int height, int width, std::uint64_t seed) {
    FeatureExtractor ex;
    ex.backend = FeatureBackend::fixed_random_convnet;
    FeatureNet& net = ex.net;
    add_conv(net, "conv1", 3, 8);
    add_plain(net, ReluLayer{});
    add_conv(net, "conv2", 8, 8);
    net.taps[0] = net.layers.size() - 1;
    add_plain(net, ReluLayer{});
    add_plain(net, AvgPoolLayer{});
    add_conv(net, "conv3", 8, 16);
    add_plain(net, ReluLayer{});
    add_conv(net, "conv4", 16, 16);
    net.taps[1] = net.layers.size() - 1;
    net.downsampling = 2;

    Rng rng(derive_seed(seed, "feature-net"));
    for (auto& layer : net.layers) {
        if (auto* conv = std::get_if<Conv2d>(&layer)) {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(conv->fan_in())));
            for (double& w : conv->weight) w = dist(rng);
            for (double& b : conv->bias) b = 0.1 * dist(rng);
        }
    }
    finalize(ex, height, width);
    return ex;
}

FeatureExtractor load_vgg19_extractor(const std::filesystem::path& weights, int height, int width) {
    FeatureExtractor ex;
    ex.backend = FeatureBackend::pretrained_deep_net;
    ex.net = vgg19_skeleton();
    const TensorArchive archive = read_archive(weights);
    for (std::size_t i = 0; i < ex.net.layers.size(); ++i) {
        if (auto* conv = std::get_if<Conv2d>(&ex.net.layers[i])) {
            const std::string& name = ex.net.layer_names[i];
            conv->weight = archive.require(name + ".weight", conv->weight.size()).values;
            conv->bias = archive.require(name + ".bias", conv->bias.size()).values;
        }
    }
    finalize(ex, height, width);
    return ex;
}

void write_random_vgg19_weights(const std::filesystem::path& path, std::uint64_t seed) {
    const FeatureNet net = vgg19_skeleton();
    TensorArchive archive;
    archive.metadata["network"] = "vgg19-conv4_4";
    Rng rng(seed);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* conv = std::get_if<Conv2d>(&net.layers[i])) {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(conv->fan_in())));
            std::vector<double> w(conv->weight.size());
            for (double& v : w) v = dist(rng);
            const std::vector<double> b(conv->bias.size(), 0.0);
            const std::string& name = net.layer_names[i];
            archive.add(name + ".weight", {conv->out_channels, conv->in_channels, 3, 3}, w);
            archive.add(name + ".bias", {conv->out_channels}, b);
        }
    }
    write_archive(archive, path);
}

FeatureTrace extract_batch(const FeatureExtractor& ex, const Tensor& images01, bool keep_activations) {
    check_image_batch(ex, images01);
    FeatureTrace trace;
    trace.images01 = images01;
    const std::size_t last = ex.net.taps[1];
    Tensor act = preprocess_for_deep_net(images01);
    Tensor tap0;
    for (std::size_t i = 0; i <= last; ++i) {
        Tensor next = layer_forward(ex.net.layers[i], act);
        if (keep_activations) trace.activations.push_back(std::move(act));
        if (i == ex.net.taps[0]) tap0 = next;
        act = std::move(next);
    }
    if (keep_activations) trace.activations.push_back(act);
    const Tensor& tap1 = act;

    const auto lengths = ex.component_lengths();
    for (int b = 0; b < images01.n; ++b) {
        FeatureVector fv;
        fv.data.reserve(ex.dimension());
        const std::array<std::span<const double>, kFeatureComponents> parts{images01.sample(b), tap0.sample(b),
                                                                             tap1.sample(b)};
        for (int k = 0; k < kFeatureComponents; ++k) {
            if (parts[k].size() != lengths[k]) throw ArgumentError("feature component length mismatch");
            fv.layout[k] = {fv.data.size(), parts[k].size()};
            for (double v : parts[k]) fv.data.push_back(ex.weights[k] * v);
        }
        trace.features.push_back(std::move(fv));
    }
    return trace;
}

FeatureVector extract(const FeatureExtractor& extractor, const Image01& img) {
    return std::move(extract_batch(extractor, image_to_tensor(img), false).features.front());
}

Tensor feature_backward(const FeatureExtractor& ex, const FeatureTrace& trace,
                        std::span<const std::vector<double>> d_features) {
    const Tensor& images = trace.images01;
    if (d_features.size() != static_cast<std::size_t>(images.n)) throw ArgumentError("one feature gradient per image");
    if (trace.activations.size() != ex.net.taps[1] + 2) throw ArgumentError("trace lacks activations for backprop");
    const auto lengths = ex.component_lengths();
    const std::size_t dim = ex.dimension();

    auto scatter = [&](const Tensor& like, int component) {
        Tensor g(like.n, like.c, like.h, like.w);
        const std::size_t offset = component == 0 ? 0 : component == 1 ? lengths[0] : lengths[0] + lengths[1];
        for (int b = 0; b < like.n; ++b) {
            const auto& d = d_features[static_cast<std::size_t>(b)];
            if (d.size() != dim) throw ArgumentError("feature gradient has the wrong length");
            auto dst = g.sample(b);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = ex.weights[component] * d[offset + i];
        }
        return g;
    };

    Tensor d = scatter(trace.activations.back(), 2);
    for (std::size_t i = ex.net.taps[1] + 1; i-- > 0;) {
        if (i == ex.net.taps[0]) {
            const Tensor direct = scatter(trace.activations[i + 1], 1);
            for (std::size_t j = 0; j < d.size(); ++j) d.data[j] += direct.data[j];
        }
        d = layer_backward(ex.net.layers[i], trace.activations[i], d);
    }
    Tensor d_images = scatter(images, 0);
    for (std::size_t j = 0; j < d_images.size(); ++j) d_images.data[j] += 255.0 * d.data[j];
    return d_images;
}

std::array<double, kFeatureComponents> component_magnitudes(const FeatureExtractor& extractor,
                                                            std::span<const Image01> images) {
    if (images.empty()) throw ArgumentError("need at least one image");
    std::array<double, kFeatureComponents> sums{};
    std::array<double, kFeatureComponents> counts{};
    for (const auto& img : images) {
        const FeatureVector fv = extract(extractor, img);
        for (int k = 0; k < kFeatureComponents; ++k) {
            for (double v : fv.component(k)) sums[k] += std::abs(v);
            counts[k] += static_cast<double>(fv.layout[k].length);
        }
    }
    for (int k = 0; k < kFeatureComponents; ++k) sums[k] /= counts[k];
    return sums;
}

std::array<double, kFeatureComponents> weights_from_magnitudes(std::span<const double, kFeatureComponents> magnitudes) {
    std::array<double, kFeatureComponents> w{};
    for (int k = 0; k < kFeatureComponents; ++k) w[k] = 1.0 / std::max(magnitudes[k], kCalibrationFloor);
    return w;
}

std::array<double, kFeatureComponents> calibrate_weights(const FeatureExtractor& extractor,
                                                         std::span<const Image01> calibration_images) {
    if (calibration_images.empty()) throw ArgumentError("calibration set is empty");
    FeatureExtractor unit = extractor;
    unit.weights = {1.0, 1.0, 1.0};
    const auto mags = component_magnitudes(unit, calibration_images);
    return weights_from_magnitudes(mags);
}

ProjectionMatrix::ProjectionMatrix(int target_dim, std::size_t source_dim, std::uint64_t seed)
    : target_dim_(target_dim), source_dim_(source_dim), seed_(seed) {
    if (target_dim < 1 || source_dim < 1) throw ArgumentError("projection dimensions must be positive");
    entries_.resize(static_cast<std::size_t>(target_dim) * source_dim);
    Rng rng(derive_seed(seed, "projection"));
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(target_dim)));
    for (double& e : entries_) e = dist(rng);
}

std::vector<double> ProjectionMatrix::apply(std::span<const double> v) const {
    if (v.size() != source_dim_) {
        throw ArgumentError("projection expects length " + std::to_string(source_dim_) + ", got " +
                            std::to_string(v.size()));
    }
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMatrix> m(entries_.data(), target_dim_, static_cast<Eigen::Index>(source_dim_));
    Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    std::vector<double> out(static_cast<std::size_t>(target_dim_));
    Eigen::Map<Eigen::VectorXd>(out.data(), target_dim_).noalias() = m * x;
    return out;
}

std::vector<double> project(const ProjectionMatrix& p, std::span<const double> v) { return p.apply(v); }

double feature_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ArgumentError("feature length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

}  // namespace srim
