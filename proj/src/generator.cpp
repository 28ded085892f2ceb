#include "srim/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "srim/errors.hpp"

namespace srim {

void SubNetworkConfig::validate() const {
    if (conv_layers < 1) throw ArgumentError("conv_layers must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ArgumentError("kernel must be a positive odd number");
    if (hidden_channels < 1) throw ArgumentError("hidden_channels must be >= 1");
    if (noise_channels < 1) throw ArgumentError("noise_channels must be >= 1");
}

int SubNetworkConfig::in_channels(int layer) const {
    return layer == 0 ? kChannels + noise_channels : hidden_channels + kChannels;
}

int SubNetworkConfig::out_channels(int layer) const {
    return layer == conv_layers - 1 ? kChannels : hidden_channels;
}

GeneratorParams init_params(const SubNetworkConfig& config, std::uint64_t seed) {
    config.validate();
    GeneratorParams params;
    params.config = config;
    Rng rng(derive_seed(seed, "generator-init"));
    for (auto& stage : params.stages) {
        for (int i = 0; i < config.conv_layers; ++i) {
            Conv2d conv(config.in_channels(i), config.out_channels(i), config.kernel);
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(conv.fan_in())));
            for (double& w : conv.weight) w = dist(rng);
            stage.convs.push_back(std::move(conv));
            if (i + 1 < config.conv_layers) stage.norms.emplace_back(config.hidden_channels);
        }
    }
    return params;
}

namespace {

constexpr std::array<const char*, kStages> kStageNames{"lower", "upper"};

template <typename Params>
void check_stage_shapes(const Params& stage, const SubNetworkConfig& config) {
    if (static_cast<int>(stage.convs.size()) != config.conv_layers ||
        static_cast<int>(stage.norms.size()) != config.conv_layers - 1) {
        throw ArgumentError("stage parameters do not match the sub-network config");
    }
}

}  // namespace

std::vector<NamedArray> trainable_arrays(GeneratorParams& params) {
    std::vector<NamedArray> out;
    for (int s = 0; s < kStages; ++s) {
        const std::string prefix = kStageNames[s];
        auto& stage = params.stages[s];
        for (std::size_t i = 0; i < stage.convs.size(); ++i) {
            const std::string conv = prefix + ".conv" + std::to_string(i);
            out.push_back({conv + ".weight", stage.convs[i].weight});
            out.push_back({conv + ".bias", stage.convs[i].bias});
            if (i < stage.norms.size()) {
                const std::string bn = prefix + ".bn" + std::to_string(i);
                out.push_back({bn + ".gamma", stage.norms[i].gamma});
                out.push_back({bn + ".beta", stage.norms[i].beta});
            }
        }
    }
    return out;
}

std::vector<NamedArray> buffer_arrays(GeneratorParams& params) {
    std::vector<NamedArray> out;
    for (int s = 0; s < kStages; ++s) {
        auto& stage = params.stages[s];
        for (std::size_t i = 0; i < stage.norms.size(); ++i) {
            const std::string bn = std::string(kStageNames[s]) + ".bn" + std::to_string(i);
            out.push_back({bn + ".running_mean", stage.norms[i].running_mean});
            out.push_back({bn + ".running_var", stage.norms[i].running_var});
        }
    }
    return out;
}

GeneratorGrad zero_grad(const GeneratorParams& params) {
    GeneratorGrad grad;
    for (int s = 0; s < kStages; ++s) {
        const auto& stage = params.stages[s];
        for (const auto& conv : stage.convs) {
            grad.stages[s].convs.push_back({std::vector<double>(conv.weight.size(), 0.0),
                                            std::vector<double>(conv.bias.size(), 0.0)});
        }
        for (const auto& bn : stage.norms) {
            grad.stages[s].norms.push_back({std::vector<double>(bn.gamma.size(), 0.0),
                                            std::vector<double>(bn.beta.size(), 0.0)});
        }
    }
    return grad;
}

// Must mirror the ordering of trainable_arrays.
std::vector<std::span<double>> grad_arrays(GeneratorGrad& grad) {
    std::vector<std::span<double>> out;
    for (auto& stage : grad.stages) {
        for (std::size_t i = 0; i < stage.convs.size(); ++i) {
            out.emplace_back(stage.convs[i].weight);
            out.emplace_back(stage.convs[i].bias);
            if (i < stage.norms.size()) {
                out.emplace_back(stage.norms[i].gamma);
                out.emplace_back(stage.norms[i].beta);
            }
        }
    }
    return out;
}

std::size_t parameter_count(const GeneratorParams& params) {
    std::size_t total = 0;
    for (const auto& a : trainable_arrays(const_cast<GeneratorParams&>(params))) total += a.values.size();
    return total;
}

bool params_finite(const GeneratorParams& params) {
    auto& mutable_params = const_cast<GeneratorParams&>(params);
    for (const auto& a : trainable_arrays(mutable_params))
        if (!all_finite(a.values)) return false;
    for (const auto& a : buffer_arrays(mutable_params))
        if (!all_finite(a.values)) return false;
    return true;
}

Tensor draw_noise_map(int n, int channels, int h, int w, Rng& rng) {
    Tensor t(n, channels, h, w);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : t.data) v = dist(rng);
    return t;
}

NoisePair draw_noise(int in_h, int in_w, int noise_channels, Rng& rng) {
    NoisePair noise;
    noise.lower = draw_noise_map(1, noise_channels, kStageFactor * in_h, kStageFactor * in_w, rng);
    noise.upper = draw_noise_map(1, noise_channels, kTotalFactor * in_h, kTotalFactor * in_w, rng);
    return noise;
}

std::pair<Tensor, Tensor> stack_noise(std::span<const NoisePair> noises) {
    if (noises.empty()) throw ArgumentError("no noise to stack");
    const Tensor& l0 = noises.front().lower;
    const Tensor& u0 = noises.front().upper;
    Tensor lower(static_cast<int>(noises.size()), l0.c, l0.h, l0.w);
    Tensor upper(static_cast<int>(noises.size()), u0.c, u0.h, u0.w);
    for (int b = 0; b < lower.n; ++b) {
        const NoisePair& np = noises[static_cast<std::size_t>(b)];
        if (!np.lower.same_shape(l0) || !np.upper.same_shape(u0)) throw ArgumentError("noise shapes differ in batch");
        std::copy(np.lower.data.begin(), np.lower.data.end(), lower.sample(b).begin());
        std::copy(np.upper.data.begin(), np.upper.data.end(), upper.sample(b).begin());
    }
    return {std::move(lower), std::move(upper)};
}

Tensor stage_forward(const StageParams& stage, const SubNetworkConfig& config, const Tensor& input, const Tensor& skip,
                     const Tensor& noise, Mode mode, StageCache* cache) {
    check_stage_shapes(stage, config);
    if (input.c != kChannels) throw ArgumentError("stage input must have 3 channels, got " + input.shape_string());
    const int oh = input.h * kStageFactor, ow = input.w * kStageFactor;
    if (noise.n != input.n || noise.c != config.noise_channels || noise.h != oh || noise.w != ow) {
        throw ArgumentError("noise " + noise.shape_string() + " does not fit stage input " + input.shape_string());
    }
    if (skip.n != input.n || skip.c != kChannels || skip.h != oh || skip.w != ow) {
        throw ArgumentError("skip image " + skip.shape_string() + " does not fit stage input " + input.shape_string());
    }
    if (cache) {
        cache->skip = skip;
        cache->conv_inputs.clear();
        cache->pre_activations.clear();
        cache->norms.assign(stage.norms.size(), {});
    }
    Tensor layer_in = concat_channels(upsample_bilinear(input, kStageFactor), noise);
    const int last = config.conv_layers - 1;
    for (int i = 0; i <= last; ++i) {
        if (i > 0) layer_in = concat_channels(layer_in, skip);
        Tensor y = conv2d_forward(stage.convs[i], layer_in);
        if (cache) cache->conv_inputs.push_back(std::move(layer_in));
        if (i == last) {
            Tensor out = sigmoid_forward(y);
            if (cache) cache->output = out;
            return out;
        }
        y = batchnorm_forward(stage.norms[i], y, mode, cache ? &cache->norms[i] : nullptr);
        layer_in = relu_forward(y);
        if (cache) cache->pre_activations.push_back(std::move(y));
    }
    return {};  // unreachable: conv_layers >= 1
}

Tensor stage_backward(const StageParams& stage, const SubNetworkConfig& config, const Tensor& input,
                      const StageCache& cache, const Tensor& d_output, StageGrad& grad, bool want_input_grad) {
    const int last = config.conv_layers - 1;
    Tensor d = sigmoid_backward(cache.output, d_output);
    for (int i = last; i >= 0; --i) {
        const bool need_dx = i > 0 || want_input_grad;
        Tensor d_in = conv2d_backward(stage.convs[i], cache.conv_inputs[i], d, &grad.convs[i], need_dx);
        if (i == 0) {
            if (!want_input_grad) return {};
            Tensor d_up = leading_channels(d_in, kChannels);
            Tensor d_x = upsample_bilinear_backward(d_up, kStageFactor);
            if (d_x.h != input.h || d_x.w != input.w) throw ArgumentError("stage input gradient shape mismatch");
            return d_x;
        }
        Tensor d_hidden = leading_channels(d_in, config.hidden_channels);
        d_hidden = relu_backward(cache.pre_activations[i - 1], d_hidden);
        d = batchnorm_backward(stage.norms[i - 1], cache.norms[i - 1], d_hidden, grad.norms[i - 1]);
    }
    return {};
}

Tensor sub_forward(const StageParams& stage, const SubNetworkConfig& config, const Tensor& input, const Tensor& noise,
                   Mode mode) {
    return stage_forward(stage, config, input, upsample_bilinear(input, kStageFactor), noise, mode, nullptr);
}

ForwardResult forward(const GeneratorParams& params, const Tensor& x, const Tensor& z_lower, const Tensor& z_upper,
                      Mode mode, ForwardCache* cache) {
    ForwardResult result;
    const Tensor skip_lower = upsample_bilinear(x, kStageFactor);
    result.mid = stage_forward(params.lower(), params.config, x, skip_lower, z_lower, mode,
                               cache ? &cache->lower : nullptr);
    const Tensor skip_upper = upsample_bilinear(x, kTotalFactor);
    result.out = stage_forward(params.upper(), params.config, result.mid, skip_upper, z_upper, mode,
                               cache ? &cache->upper : nullptr);
    if (cache) cache->input = x;
    return result;
}

Tensor forward_lower(const GeneratorParams& params, const Tensor& x, const Tensor& z_lower, Mode mode) {
    return stage_forward(params.lower(), params.config, x, upsample_bilinear(x, kStageFactor), z_lower, mode, nullptr);
}

Tensor forward_upper(const GeneratorParams& params, const Tensor& x, const Tensor& mid, const Tensor& z_upper,
                     Mode mode) {
    if (mid.n != x.n || mid.h != x.h * kStageFactor || mid.w != x.w * kStageFactor) {
        throw ArgumentError("intermediate image " + mid.shape_string() + " does not match input " + x.shape_string());
    }
    return stage_forward(params.upper(), params.config, mid, upsample_bilinear(x, kTotalFactor), z_upper, mode, nullptr);
}

GeneratorGrad backward(const GeneratorParams& params, const ForwardCache& cache, const Tensor& d_out,
                       const Tensor* d_mid) {
    GeneratorGrad grad = zero_grad(params);
    if (!d_out.same_shape(cache.upper.output)) throw ArgumentError("output gradient shape mismatch");
    Tensor d_lower_out = stage_backward(params.upper(), params.config, cache.lower.output, cache.upper, d_out,
                                        grad.stages[1], true);
    if (d_mid) {
        if (!d_mid->same_shape(d_lower_out)) throw ArgumentError("intermediate gradient shape mismatch");
        for (std::size_t i = 0; i < d_lower_out.size(); ++i) d_lower_out.data[i] += d_mid->data[i];
    }
    stage_backward(params.lower(), params.config, cache.input, cache.lower, d_lower_out, grad.stages[0], false);
    return grad;
}

void update_running_stats(GeneratorParams& params, const ForwardCache& cache) {
    const std::array<const StageCache*, kStages> caches{&cache.lower, &cache.upper};
    for (int s = 0; s < kStages; ++s) {
        auto& stage = params.stages[s];
        const StageCache& sc = *caches[s];
        const bool train_pass = std::all_of(sc.norms.begin(), sc.norms.end(),
                                            [](const BatchNormCache& c) { return c.mode == Mode::train; });
        if (sc.norms.size() != stage.norms.size() || sc.pre_activations.size() != stage.norms.size() || !train_pass) {
            throw ArgumentError("forward cache does not come from a train-mode pass of these params");
        }
        for (std::size_t i = 0; i < stage.norms.size(); ++i) {
            const Tensor& y = sc.pre_activations[i];
            batchnorm_update_running(stage.norms[i], sc.norms[i], static_cast<std::size_t>(y.n) * y.plane());
        }
    }
}

NoisePair noise_for_seed(const GeneratorParams& params, int in_h, int in_w, std::uint64_t seed) {
    Rng rng(seed);
    return draw_noise(in_h, in_w, params.config.noise_channels, rng);
}

Image01 sample(const GeneratorParams& params, const Image01& x, std::uint64_t seed) {
    const NoisePair noise = noise_for_seed(params, x.height, x.width, seed);
    const ForwardResult r = forward(params, image_to_tensor(x), noise.lower, noise.upper, Mode::eval);
    return tensor_to_image(r.out);
}

}  // namespace srim
