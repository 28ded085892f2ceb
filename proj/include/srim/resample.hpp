#pragma once

#include "srim/image.hpp"

namespace srim {

// Bicubic resampling with the Catmull-Rom kernel (a = -0.5), pixel centers at
// half-integer coordinates, edge replication and, when shrinking, a kernel
// widened by the shrink factor (antialiasing). Weights are renormalized per
// output sample so constant images stay constant.

Image01 resize_bicubic(const Image01& img, int out_h, int out_w);

ImageU8 anisotropic_resize(const ImageU8& img, int out_h, int out_w);

// Dimensions must be divisible by factor.
ImageU8 downsample(const ImageU8& img, int factor);

ImageU8 bicubic_upscale(const ImageU8& img, int factor);

double cubic_kernel(double t);

}  // namespace srim
