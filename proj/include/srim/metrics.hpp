#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "srim/dataset.hpp"
#include "srim/generator.hpp"
#include "srim/image.hpp"

namespace srim {

/// Single-channel real image.
struct LumaImage {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Rec. 601 luma: Y = 0.299 R + 0.587 G + 0.114 B, unrounded.
LumaImage luminance(const ImageU8& img);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10·log10(255² / MSE) on luminance; +infinity for identical luminance.
double psnr(const ImageU8& a, const ImageU8& b);

/// Mean SSIM on luminance over every fully contained 11×11 window
/// (Gaussian σ = 1.5, K1 = 0.01, K2 = 0.03, L = 255). Both images must be at
/// least 11×11.
double ssim(const ImageU8& a, const ImageU8& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

struct EvalRow {
    std::string image_id;
    std::string method;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MethodSummary {
    std::string method;
    double mean_psnr_db = 0.0;  // over finite values only
    double mean_ssim = 0.0;
    std::size_t images = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<MethodSummary> summaries;

    const MethodSummary& summary(const std::string& method) const;
};

inline const std::string kMethodSrim = "SRIM";
inline const std::string kMethodBicubic = "bicubic";
inline const std::string kMethodTruth = "truth";

/// Seed used for the SRIM sample of one test image.
std::uint64_t evaluation_seed(std::uint64_t seed, const std::string& image_id);

/// Scores SRIM samples (eval mode, per-image seeds) and the bicubic ×4 baseline
/// against the ground truth. With include_truth the ground truth is also
/// scored against itself.
EvalReport evaluate(const GeneratorParams& params, const PairedDataset& test_set, std::uint64_t seed,
                    bool include_truth = false);

/// Builds summaries from rows, preserving first-appearance method order.
void summarize(EvalReport& report);

/// "image_id,method,psnr_db,ssim" rows followed by one "mean" row per method.
std::string report_csv(const EvalReport& report);

}  // namespace srim
