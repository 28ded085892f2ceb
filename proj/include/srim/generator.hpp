#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srim/image.hpp"
#include "srim/layers.hpp"
#include "srim/rng.hpp"
#include "srim/tensor.hpp"

namespace srim {

inline constexpr int kStages = 2;
inline constexpr int kStageFactor = 2;
inline constexpr int kTotalFactor = 4;

/// Shape of one ×2 sub-network. Both stages share it.
///
/// Layer i (0-based) of a stage sees:
///   i == 0 : bilinear-upsampled stage input (3 ch) ++ noise (noise_channels)
///   i >= 1 : previous hidden activation ++ skip image (3 ch)
/// and produces hidden_channels, except the last layer which produces 3 and is
/// followed by a sigmoid. Every non-final layer is conv -> batch norm -> relu.
struct SubNetworkConfig {
    int conv_layers = 9;
    int kernel = 5;
    int hidden_channels = 64;
    int noise_channels = 1;

    void validate() const;
    int in_channels(int layer) const;
    int out_channels(int layer) const;

    friend bool operator==(const SubNetworkConfig&, const SubNetworkConfig&) = default;
};

struct StageParams {
    std::vector<Conv2d> convs;
    std::vector<BatchNorm> norms;  // conv_layers - 1 entries
};

struct GeneratorParams {
    SubNetworkConfig config;
    std::array<StageParams, kStages> stages;  // [0] lower, [1] upper

    const StageParams& lower() const { return stages[0]; }
    const StageParams& upper() const { return stages[1]; }
};

struct StageGrad {
    std::vector<Conv2dGrad> convs;
    std::vector<BatchNormGrad> norms;
};

struct GeneratorGrad {
    std::array<StageGrad, kStages> stages;
};

/// Latent noise for one image: spatial maps at 2× and 4× the input size.
struct NoisePair {
    Tensor lower;  // 1 × k_z × 2h × 2w
    Tensor upper;  // 1 × k_z × 4h × 4w

    friend bool operator==(const NoisePair&, const NoisePair&) = default;
};

struct NamedArray {
    std::string name;
    std::span<double> values;
};

GeneratorParams init_params(const SubNetworkConfig& config, std::uint64_t seed);

/// Trainable arrays (conv weights/biases, norm scale/shift) in a fixed order
/// with stable names such as "lower.conv0.weight" or "upper.bn3.gamma".
std::vector<NamedArray> trainable_arrays(GeneratorParams& params);
/// Running normalization statistics ("lower.bn0.running_mean", ...).
std::vector<NamedArray> buffer_arrays(GeneratorParams& params);
/// Zeroed gradient with the same layout as trainable_arrays(params).
GeneratorGrad zero_grad(const GeneratorParams& params);
std::vector<std::span<double>> grad_arrays(GeneratorGrad& grad);

std::size_t parameter_count(const GeneratorParams& params);
bool params_finite(const GeneratorParams& params);

NoisePair draw_noise(int in_h, int in_w, int noise_channels, Rng& rng);
Tensor draw_noise_map(int n, int channels, int h, int w, Rng& rng);

/// Concatenates per-image noise into batch tensors.
std::pair<Tensor, Tensor> stack_noise(std::span<const NoisePair> noises);

struct StageCache {
    Tensor skip;
    std::vector<Tensor> conv_inputs;
    std::vector<Tensor> pre_activations;  // batch-norm output, input to relu
    std::vector<BatchNormCache> norms;
    Tensor output;
};

/// Runs one stage on an explicit skip image (bilinearly upsampled original
/// input at the stage's output resolution).
Tensor stage_forward(const StageParams& stage, const SubNetworkConfig& config, const Tensor& input, const Tensor& skip,
                     const Tensor& noise, Mode mode, StageCache* cache);

/// Backward through one stage. Accumulates into `grad` and returns the
/// gradient with respect to the stage input (before upsampling) when asked.
Tensor stage_backward(const StageParams& stage, const SubNetworkConfig& config, const Tensor& input,
                      const StageCache& cache, const Tensor& d_output, StageGrad& grad, bool want_input_grad);

/// One ×2 sub-network where the skip source is the stage input itself.
Tensor sub_forward(const StageParams& stage, const SubNetworkConfig& config, const Tensor& input, const Tensor& noise,
                   Mode mode);

struct ForwardResult {
    Tensor mid;  // 2× input
    Tensor out;  // 4× input
};

struct ForwardCache {
    Tensor input;
    StageCache lower, upper;
};

/// Full ×4 transform. The lower stage maps x (with z_lower) to mid; the upper
/// maps mid (with z_upper) to out, its skips carrying x upsampled ×4.
ForwardResult forward(const GeneratorParams& params, const Tensor& x, const Tensor& z_lower, const Tensor& z_upper,
                      Mode mode, ForwardCache* cache = nullptr);

/// Lower stage only (used by hierarchical selection).
Tensor forward_lower(const GeneratorParams& params, const Tensor& x, const Tensor& z_lower, Mode mode);
/// Upper stage only, given the lower output.
Tensor forward_upper(const GeneratorParams& params, const Tensor& x, const Tensor& mid, const Tensor& z_upper, Mode mode);

/// Backprop of d_out (and optionally d_mid) through a train- or eval-mode
/// forward pass.
GeneratorGrad backward(const GeneratorParams& params, const ForwardCache& cache, const Tensor& d_out,
                       const Tensor* d_mid = nullptr);

/// Folds batch statistics of a train-mode pass into the running averages.
void update_running_stats(GeneratorParams& params, const ForwardCache& cache);

/// Draws a NoisePair from `seed` and runs the eval-mode transform.
Image01 sample(const GeneratorParams& params, const Image01& x, std::uint64_t seed);

NoisePair noise_for_seed(const GeneratorParams& params, int in_h, int in_w, std::uint64_t seed);

}  // namespace srim
