#include "srim/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "srim/errors.hpp"

namespace srim {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Upper bound on the im2col buffer, in doubles. Large images are processed in
// column chunks so memory stays bounded at any resolution.
constexpr std::size_t kMaxColumnBuffer = std::size_t{1} << 22;

int chunk_pixels(std::size_t rows, std::size_t pixels) {
    const std::size_t fit = std::max<std::size_t>(1, kMaxColumnBuffer / std::max<std::size_t>(rows, 1));
    return static_cast<int>(std::min(fit, pixels));
}

// Fills cols (K × len, row-major) for output pixels [p0, p0+len) of image `src`.
void im2col(const double* src, int channels, int h, int w, int k, int p0, int len, double* cols) {
    const int pad = k / 2;
    std::size_t row = 0;
    for (int ch = 0; ch < channels; ++ch) {
        const double* plane = src + static_cast<std::size_t>(ch) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                double* out = cols + row * static_cast<std::size_t>(len);
                for (int j = 0; j < len; ++j) {
                    const int p = p0 + j;
                    const int sy = p / w + ky - pad;
                    const int sx = p % w + kx - pad;
                    out[j] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? plane[sy * w + sx] : 0.0;
                }
            }
        }
    }
}

void col2im_add(const double* cols, int channels, int h, int w, int k, int p0, int len, double* dst) {
    const int pad = k / 2;
    std::size_t row = 0;
    for (int ch = 0; ch < channels; ++ch) {
        double* plane = dst + static_cast<std::size_t>(ch) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const double* in = cols + row * static_cast<std::size_t>(len);
                for (int j = 0; j < len; ++j) {
                    const int p = p0 + j;
                    const int sy = p / w + ky - pad;
                    const int sx = p % w + kx - pad;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) plane[sy * w + sx] += in[j];
                }
            }
        }
    }
}

void check_conv_input(const Conv2d& conv, const Tensor& x) {
    if (x.c != conv.in_channels) {
        throw ArgumentError("conv expects " + std::to_string(conv.in_channels) + " input channels, got tensor " +
                            x.shape_string());
    }
}

struct AxisTaps {
    std::vector<int> i0, i1;
    std::vector<double> t;
};

AxisTaps bilinear_taps(int in_size, int factor) {
    const int out_size = in_size * factor;
    AxisTaps taps;
    taps.i0.resize(out_size);
    taps.i1.resize(out_size);
    taps.t.resize(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double src = std::max((o + 0.5) / factor - 0.5, 0.0);
        const int lo = std::min(static_cast<int>(src), in_size - 1);
        taps.i0[o] = lo;
        taps.i1[o] = std::min(lo + 1, in_size - 1);
        taps.t[o] = src - lo;
    }
    return taps;
}

void check_poolable(const Tensor& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ArgumentError("pooling needs even dimensions, got " + x.shape_string());
}

}  // namespace

Conv2d::Conv2d(int in, int out, int k)
    : in_channels(in), out_channels(out), kernel(k),
      weight(static_cast<std::size_t>(out) * in * k * k, 0.0), bias(static_cast<std::size_t>(out), 0.0) {
    if (in < 1 || out < 1 || k < 1 || k % 2 == 0) throw ArgumentError("invalid convolution shape");
}

Tensor conv2d_forward(const Conv2d& conv, const Tensor& x) {
    check_conv_input(conv, x);
    const std::size_t rows = conv.fan_in();
    const std::size_t pixels = x.plane();
    const int chunk = chunk_pixels(rows, pixels);
    Tensor y(x.n, conv.out_channels, x.h, x.w);
    std::vector<double> cols(rows * static_cast<std::size_t>(chunk));
    ConstRowMap weight(conv.weight.data(), conv.out_channels, static_cast<Eigen::Index>(rows));
    const Eigen::Map<const Eigen::VectorXd> bias(conv.bias.data(), conv.out_channels);
    for (int b = 0; b < x.n; ++b) {
        RowMap out(y.sample(b).data(), conv.out_channels, static_cast<Eigen::Index>(pixels));
        for (int p0 = 0; p0 < static_cast<int>(pixels); p0 += chunk) {
            const int len = std::min(chunk, static_cast<int>(pixels) - p0);
            im2col(x.sample(b).data(), x.c, x.h, x.w, conv.kernel, p0, len, cols.data());
            ConstRowMap col_map(cols.data(), static_cast<Eigen::Index>(rows), len);
            out.middleCols(p0, len).noalias() = weight * col_map;
            out.middleCols(p0, len).colwise() += bias;
        }
    }
    return y;
}

Tensor conv2d_backward(const Conv2d& conv, const Tensor& x, const Tensor& dy, Conv2dGrad* grad, bool want_input_grad) {
    check_conv_input(conv, x);
    if (dy.n != x.n || dy.c != conv.out_channels || dy.h != x.h || dy.w != x.w) {
        throw ArgumentError("conv gradient shape " + dy.shape_string() + " does not match input " + x.shape_string());
    }
    const std::size_t rows = conv.fan_in();
    const std::size_t pixels = x.plane();
    const int chunk = chunk_pixels(rows, pixels);
    Tensor dx;
    if (want_input_grad) dx = Tensor(x.n, x.c, x.h, x.w);
    if (grad) {
        grad->weight.resize(conv.weight.size(), 0.0);
        grad->bias.resize(conv.bias.size(), 0.0);
    }
    std::vector<double> cols(rows * static_cast<std::size_t>(chunk));
    std::vector<double> dcols(want_input_grad ? cols.size() : 0);
    ConstRowMap weight(conv.weight.data(), conv.out_channels, static_cast<Eigen::Index>(rows));
    for (int b = 0; b < x.n; ++b) {
        ConstRowMap dout(dy.sample(b).data(), conv.out_channels, static_cast<Eigen::Index>(pixels));
        if (grad) {
            Eigen::Map<Eigen::VectorXd> db(grad->bias.data(), conv.out_channels);
            db += dout.rowwise().sum();
        }
        for (int p0 = 0; p0 < static_cast<int>(pixels); p0 += chunk) {
            const int len = std::min(chunk, static_cast<int>(pixels) - p0);
            if (grad) {
                im2col(x.sample(b).data(), x.c, x.h, x.w, conv.kernel, p0, len, cols.data());
                ConstRowMap col_map(cols.data(), static_cast<Eigen::Index>(rows), len);
                RowMap dw(grad->weight.data(), conv.out_channels, static_cast<Eigen::Index>(rows));
                dw.noalias() += dout.middleCols(p0, len) * col_map.transpose();
            }
            if (want_input_grad) {
                RowMap dcol_map(dcols.data(), static_cast<Eigen::Index>(rows), len);
                dcol_map.noalias() = weight.transpose() * dout.middleCols(p0, len);
                col2im_add(dcols.data(), x.c, x.h, x.w, conv.kernel, p0, len, dx.sample(b).data());
            }
        }
    }
    return dx;
}

BatchNorm::BatchNorm(int channels)
    : gamma(static_cast<std::size_t>(channels), 1.0), beta(static_cast<std::size_t>(channels), 0.0),
      running_mean(static_cast<std::size_t>(channels), 0.0), running_var(static_cast<std::size_t>(channels), 1.0) {}

Tensor batchnorm_forward(const BatchNorm& bn, const Tensor& x, Mode mode, BatchNormCache* cache) {
    if (x.c != bn.channels()) throw ArgumentError("batch norm channel mismatch for " + x.shape_string());
    Tensor y(x.n, x.c, x.h, x.w);
    const std::size_t plane = x.plane();
    const double count = static_cast<double>(plane) * x.n;
    if (cache) {
        cache->normalized = Tensor(x.n, x.c, x.h, x.w);
        cache->inv_std.assign(static_cast<std::size_t>(x.c), 0.0);
        cache->batch_mean.assign(static_cast<std::size_t>(x.c), 0.0);
        cache->batch_var.assign(static_cast<std::size_t>(x.c), 0.0);
        cache->mode = mode;
    }
    for (int ch = 0; ch < x.c; ++ch) {
        double mean, var;
        if (mode == Mode::train) {
            double sum = 0.0;
            for (int b = 0; b < x.n; ++b) {
                const double* p = &x.data[x.index(b, ch, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) sum += p[i];
            }
            mean = sum / count;
            double sq = 0.0;
            for (int b = 0; b < x.n; ++b) {
                const double* p = &x.data[x.index(b, ch, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
            }
            var = sq / count;
        } else {
            mean = bn.running_mean[ch];
            var = bn.running_var[ch];
        }
        const double inv_std = 1.0 / std::sqrt(var + bn.eps);
        const double g = bn.gamma[ch], be = bn.beta[ch];
        for (int b = 0; b < x.n; ++b) {
            const std::size_t base = x.index(b, ch, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (x.data[base + i] - mean) * inv_std;
                if (cache) cache->normalized.data[base + i] = xhat;
                y.data[base + i] = g * xhat + be;
            }
        }
        if (cache) {
            cache->inv_std[ch] = inv_std;
            cache->batch_mean[ch] = mean;
            cache->batch_var[ch] = var;
        }
    }
    return y;
}

Tensor batchnorm_backward(const BatchNorm& bn, const BatchNormCache& cache, const Tensor& dy, BatchNormGrad& grad) {
    const Tensor& xhat = cache.normalized;
    if (!dy.same_shape(xhat)) throw ArgumentError("batch norm gradient shape mismatch");
    grad.gamma.resize(bn.gamma.size(), 0.0);
    grad.beta.resize(bn.beta.size(), 0.0);
    Tensor dx(dy.n, dy.c, dy.h, dy.w);
    const std::size_t plane = dy.plane();
    const double count = static_cast<double>(plane) * dy.n;
    for (int ch = 0; ch < dy.c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < dy.n; ++b) {
            const std::size_t base = dy.index(b, ch, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += dy.data[base + i];
                sum_dy_xhat += dy.data[base + i] * xhat.data[base + i];
            }
        }
        grad.gamma[ch] += sum_dy_xhat;
        grad.beta[ch] += sum_dy;
        const double scale = bn.gamma[ch] * cache.inv_std[ch] / count;
        for (int b = 0; b < dy.n; ++b) {
            const std::size_t base = dy.index(b, ch, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                dx.data[base + i] = cache.mode == Mode::eval
                                        ? scale * count * dy.data[base + i]
                                        : scale * (count * dy.data[base + i] - sum_dy - xhat.data[base + i] * sum_dy_xhat);
            }
        }
    }
    return dx;
}

void batchnorm_update_running(BatchNorm& bn, const BatchNormCache& cache, std::size_t count_per_channel) {
    const double correction =
        count_per_channel > 1 ? static_cast<double>(count_per_channel) / static_cast<double>(count_per_channel - 1) : 1.0;
    for (int ch = 0; ch < bn.channels(); ++ch) {
        bn.running_mean[ch] = (1.0 - bn.momentum) * bn.running_mean[ch] + bn.momentum * cache.batch_mean[ch];
        bn.running_var[ch] = (1.0 - bn.momentum) * bn.running_var[ch] + bn.momentum * cache.batch_var[ch] * correction;
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
    }
    return dx;
}

Tensor sigmoid_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y.data[i] * (1.0 - y.data[i]);
    return dx;
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
    if (factor < 1) throw ArgumentError("upsampling factor must be >= 1");
    const AxisTaps ty = bilinear_taps(x.h, factor);
    const AxisTaps tx = bilinear_taps(x.w, factor);
    Tensor y(x.n, x.c, x.h * factor, x.w * factor);
    for (int b = 0; b < x.n; ++b) {
        for (int ch = 0; ch < x.c; ++ch) {
            const double* src = &x.data[x.index(b, ch, 0, 0)];
            double* dst = &y.data[y.index(b, ch, 0, 0)];
            for (int oy = 0; oy < y.h; ++oy) {
                const double* r0 = src + static_cast<std::size_t>(ty.i0[oy]) * x.w;
                const double* r1 = src + static_cast<std::size_t>(ty.i1[oy]) * x.w;
                const double wy = ty.t[oy];
                for (int ox = 0; ox < y.w; ++ox) {
                    const double wx = tx.t[ox];
                    const double top = (1.0 - wx) * r0[tx.i0[ox]] + wx * r0[tx.i1[ox]];
                    const double bot = (1.0 - wx) * r1[tx.i0[ox]] + wx * r1[tx.i1[ox]];
                    dst[static_cast<std::size_t>(oy) * y.w + ox] = (1.0 - wy) * top + wy * bot;
                }
            }
        }
    }
    return y;
}

Tensor upsample_bilinear_backward(const Tensor& dy, int factor) {
    if (factor < 1 || dy.h % factor != 0 || dy.w % factor != 0) {
        throw ArgumentError("upsampling gradient " + dy.shape_string() + " incompatible with factor");
    }
    Tensor dx(dy.n, dy.c, dy.h / factor, dy.w / factor);
    const AxisTaps ty = bilinear_taps(dx.h, factor);
    const AxisTaps tx = bilinear_taps(dx.w, factor);
    for (int b = 0; b < dy.n; ++b) {
        for (int ch = 0; ch < dy.c; ++ch) {
            const double* src = &dy.data[dy.index(b, ch, 0, 0)];
            double* dst = &dx.data[dx.index(b, ch, 0, 0)];
            for (int oy = 0; oy < dy.h; ++oy) {
                double* r0 = dst + static_cast<std::size_t>(ty.i0[oy]) * dx.w;
                double* r1 = dst + static_cast<std::size_t>(ty.i1[oy]) * dx.w;
                const double wy = ty.t[oy];
                for (int ox = 0; ox < dy.w; ++ox) {
                    const double g = src[static_cast<std::size_t>(oy) * dy.w + ox];
                    const double wx = tx.t[ox];
                    r0[tx.i0[ox]] += (1.0 - wy) * (1.0 - wx) * g;
                    r0[tx.i1[ox]] += (1.0 - wy) * wx * g;
                    r1[tx.i0[ox]] += wy * (1.0 - wx) * g;
                    r1[tx.i1[ox]] += wy * wx * g;
                }
            }
        }
    }
    return dx;
}

Tensor avgpool2_forward(const Tensor& x) {
    check_poolable(x);
    Tensor y(x.n, x.c, x.h / 2, x.w / 2);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox) {
                    y.at(b, ch, oy, ox) = 0.25 * (x.at(b, ch, 2 * oy, 2 * ox) + x.at(b, ch, 2 * oy, 2 * ox + 1) +
                                                  x.at(b, ch, 2 * oy + 1, 2 * ox) + x.at(b, ch, 2 * oy + 1, 2 * ox + 1));
                }
    return y;
}

Tensor avgpool2_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx(x.n, x.c, x.h, x.w);
    for (int b = 0; b < dy.n; ++b)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int oy = 0; oy < dy.h; ++oy)
                for (int ox = 0; ox < dy.w; ++ox) {
                    const double g = 0.25 * dy.at(b, ch, oy, ox);
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2) dx.at(b, ch, 2 * oy + dy2, 2 * ox + dx2) = g;
                }
    return dx;
}

Tensor maxpool2_forward(const Tensor& x) {
    check_poolable(x);
    Tensor y(x.n, x.c, x.h / 2, x.w / 2);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox) {
                    y.at(b, ch, oy, ox) = std::max({x.at(b, ch, 2 * oy, 2 * ox), x.at(b, ch, 2 * oy, 2 * ox + 1),
                                                    x.at(b, ch, 2 * oy + 1, 2 * ox), x.at(b, ch, 2 * oy + 1, 2 * ox + 1)});
                }
    return y;
}

// Ties route the gradient to the first maximal element in raster order.
Tensor maxpool2_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx(x.n, x.c, x.h, x.w);
    for (int b = 0; b < dy.n; ++b)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int oy = 0; oy < dy.h; ++oy)
                for (int ox = 0; ox < dy.w; ++ox) {
                    int by = 2 * oy, bx = 2 * ox;
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2)
                            if (x.at(b, ch, 2 * oy + dy2, 2 * ox + dx2) > x.at(b, ch, by, bx)) {
                                by = 2 * oy + dy2;
                                bx = 2 * ox + dx2;
                            }
                    dx.at(b, ch, by, bx) = dy.at(b, ch, oy, ox);
                }
    return dx;
}

}  // namespace srim
