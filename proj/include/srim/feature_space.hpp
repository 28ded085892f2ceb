#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "srim/image.hpp"
#include "srim/layers.hpp"
#include "srim/tensor.hpp"

namespace srim {

inline constexpr int kFeatureComponents = 3;

// ImageNet RGB mean pixel on the [0,255] scale.
inline constexpr std::array<double, 3> kImageNetMean{123.68, 116.779, 103.939};

enum class FeatureBackend { pretrained_deep_net, fixed_random_convnet };

std::string to_string(FeatureBackend backend);
FeatureBackend parse_feature_backend(const std::string& name);

struct ReluLayer {};
struct MaxPoolLayer {};
struct AvgPoolLayer {};
using FeatureLayer = std::variant<Conv2d, ReluLayer, MaxPoolLayer, AvgPoolLayer>;

/// Frozen convolutional network with two tap points. Each tap is the output of
/// a convolution, i.e. a pre-activation.
struct FeatureNet {
    std::vector<std::string> layer_names;  // "" for parameter-free layers
    std::vector<FeatureLayer> layers;
    std::array<std::size_t, 2> taps{};  // layer indices
    int downsampling = 1;               // product of pooling strides before the last tap
};

/// φ(y) = (α1·pixels, α2·tap1, α3·tap2). Pixels are the [0,1] image in CHW
/// order; the deep taps see the image after preprocess_for_deep_net.
struct FeatureExtractor {
    FeatureBackend backend = FeatureBackend::fixed_random_convnet;
    FeatureNet net;
    std::array<double, kFeatureComponents> weights{1.0, 1.0, 1.0};
    int input_height = 0;
    int input_width = 0;
    std::string checksum;  // sha256 of the network weights

    std::array<std::size_t, kFeatureComponents> component_lengths() const;
    std::size_t dimension() const;
};

struct ComponentSpan {
    std::size_t offset = 0;
    std::size_t length = 0;
};

struct FeatureVector {
    std::vector<double> data;
    std::array<ComponentSpan, kFeatureComponents> layout{};

    std::span<const double> component(int k) const {
        return std::span<const double>(data).subspan(layout[k].offset, layout[k].length);
    }
};

/// Scales [0,1] pixels to [0,255] and subtracts the ImageNet mean per channel.
/// Throws ArgumentError for values outside [0,1].
Tensor preprocess_for_deep_net(const Image01& img);
Tensor preprocess_for_deep_net(const Tensor& images01);

/// Small randomly initialized convnet mirroring the two-tap layout:
/// conv3x3(3→8) relu conv3x3(8→8)* relu avgpool conv3x3(8→16) relu conv3x3(16→16)*
FeatureExtractor make_random_convnet_extractor(int height, int width, std::uint64_t seed);

/// VGG-19 truncated at conv4_4, taps at conv2_2 and conv4_4, weights read from
/// a tensor archive with entries "conv1_1.weight" [64,3,3,3], "conv1_1.bias"
/// [64], ... "conv4_4.bias" (RGB input order).
FeatureExtractor load_vgg19_extractor(const std::filesystem::path& weights, int height, int width);

/// Writes a weight archive with the VGG-19 layout filled with seeded random
/// values. Useful for exercising the pretrained backend without a download.
void write_random_vgg19_weights(const std::filesystem::path& path, std::uint64_t seed);

FeatureVector extract(const FeatureExtractor& extractor, const Image01& img);

/// Batched extraction that retains activations for backprop.
struct FeatureTrace {
    Tensor images01;
    std::vector<Tensor> activations;  // activations[i] = input of layer i; back() is the final output
    std::vector<FeatureVector> features;
};

FeatureTrace extract_batch(const FeatureExtractor& extractor, const Tensor& images01, bool keep_activations);

/// Gradient of Σ_b <d_features[b], φ(images[b])> with respect to the images.
Tensor feature_backward(const FeatureExtractor& extractor, const FeatureTrace& trace,
                        std::span<const std::vector<double>> d_features);

/// α_k = 1 / max(mean |φ_k|, 1e-8) measured with unit weights.
std::array<double, kFeatureComponents> calibrate_weights(const FeatureExtractor& extractor,
                                                         std::span<const Image01> calibration_images);
std::array<double, kFeatureComponents> weights_from_magnitudes(std::span<const double, kFeatureComponents> magnitudes);
/// Mean absolute value of each weighted component over the images.
std::array<double, kFeatureComponents> component_magnitudes(const FeatureExtractor& extractor,
                                                            std::span<const Image01> images);

inline constexpr double kCalibrationFloor = 1e-8;

/// Dense target_dim × source_dim matrix with i.i.d. N(0, 1/target_dim) entries.
class ProjectionMatrix {
public:
    ProjectionMatrix() = default;
    ProjectionMatrix(int target_dim, std::size_t source_dim, std::uint64_t seed);

    int target_dim() const { return target_dim_; }
    std::size_t source_dim() const { return source_dim_; }
    std::uint64_t seed() const { return seed_; }
    std::span<const double> entries() const { return entries_; }

    std::vector<double> apply(std::span<const double> v) const;

private:
    int target_dim_ = 0;
    std::size_t source_dim_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> entries_;  // row-major
};

std::vector<double> project(const ProjectionMatrix& p, std::span<const double> v);
inline std::vector<double> project(const ProjectionMatrix& p, const FeatureVector& v) { return project(p, v.data); }

/// Squared Euclidean distance.
double feature_distance(std::span<const double> a, std::span<const double> b);

}  // namespace srim
