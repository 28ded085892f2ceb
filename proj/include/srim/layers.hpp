#pragma once

#include <vector>

#include "srim/tensor.hpp"

namespace srim {

enum class Mode { train, eval };

/// Stride-1 convolution with zero "same" padding and an odd square kernel.
struct Conv2d {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    std::vector<double> weight;  // out × in × k × k
    std::vector<double> bias;    // out

    Conv2d() = default;
    Conv2d(int in, int out, int k);

    std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

struct Conv2dGrad {
    std::vector<double> weight;
    std::vector<double> bias;
};

Tensor conv2d_forward(const Conv2d& conv, const Tensor& x);

/// Accumulates parameter gradients into `grad` when non-null and returns the
/// input gradient when `want_input_grad` is set (an empty tensor otherwise).
Tensor conv2d_backward(const Conv2d& conv, const Tensor& x, const Tensor& dy, Conv2dGrad* grad, bool want_input_grad);

/// Per-channel normalization with learned scale/shift. Train mode uses batch
/// statistics over N×H×W; eval mode uses the running averages.
struct BatchNorm {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm() = default;
    explicit BatchNorm(int channels);
    int channels() const { return static_cast<int>(gamma.size()); }
};

struct BatchNormGrad {
    std::vector<double> gamma, beta;
};

struct BatchNormCache {
    Tensor normalized;  // x̂
    std::vector<double> inv_std;
    std::vector<double> batch_mean, batch_var;  // biased variance
    Mode mode = Mode::train;                    // eval: statistics were constants
};

Tensor batchnorm_forward(const BatchNorm& bn, const Tensor& x, Mode mode, BatchNormCache* cache);
Tensor batchnorm_backward(const BatchNorm& bn, const BatchNormCache& cache, const Tensor& dy, BatchNormGrad& grad);

// Folds the batch statistics of one train-mode step into the running averages
// (unbiased variance, as is conventional).
void batchnorm_update_running(BatchNorm& bn, const BatchNormCache& cache, std::size_t count_per_channel);

Tensor relu_forward(const Tensor& x);
// Gradient of relu given its *input*.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

Tensor sigmoid_forward(const Tensor& x);
// Gradient of sigmoid given its *output*.
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

/// Bilinear upsampling by an integer factor with half-pixel centers and edge
/// clamping.
Tensor upsample_bilinear(const Tensor& x, int factor);
Tensor upsample_bilinear_backward(const Tensor& dy, int factor);

Tensor avgpool2_forward(const Tensor& x);
Tensor avgpool2_backward(const Tensor& x, const Tensor& dy);
Tensor maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const Tensor& x, const Tensor& dy);

}  // namespace srim
