#include "srim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "srim/errors.hpp"
#include "srim/resample.hpp"
#include "srim/rng.hpp"

namespace srim {
namespace {

void require_same_size(const ImageU8& a, const ImageU8& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ArgumentError("image sizes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                            std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

std::vector<double> gaussian_window() {
    std::vector<double> g(kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Separable Gaussian filtering restricted to windows fully inside the image.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& g) {
    const int oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

LumaImage luminance(const ImageU8& img) {
    LumaImage y{img.height, img.width, std::vector<double>(static_cast<std::size_t>(img.height) * img.width)};
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const std::uint8_t* p = &img.data[i * kChannels];
        y.data[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return y;
}

double psnr(const ImageU8& a, const ImageU8& b) {
    require_same_size(a, b);
    if (a.data.empty()) throw ArgumentError("psnr of empty images");
    const LumaImage ya = luminance(a), yb = luminance(b);
    double sse = 0.0;
    for (std::size_t i = 0; i < ya.data.size(); ++i) {
        const double d = ya.data[i] - yb.data[i];
        sse += d * d;
    }
    if (sse == 0.0) return kPsnrIdentical;
    const double mse = sse / static_cast<double>(ya.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const ImageU8& a, const ImageU8& b) {
    require_same_size(a, b);
    if (a.height < kSsimWindow || a.width < kSsimWindow) {
        throw ArgumentError("ssim needs images of at least 11x11, got " + std::to_string(a.height) + "x" +
                            std::to_string(a.width));
    }
    const LumaImage ya = luminance(a), yb = luminance(b);
    const int h = a.height, w = a.width;
    const auto g = gaussian_window();
    std::vector<double> aa(ya.data.size()), bb(ya.data.size()), ab(ya.data.size());
    for (std::size_t i = 0; i < ya.data.size(); ++i) {
        aa[i] = ya.data[i] * ya.data[i];
        bb[i] = yb.data[i] * yb.data[i];
        ab[i] = ya.data[i] * yb.data[i];
    }
    const auto mu_a = filter_valid(ya.data, h, w, g);
    const auto mu_b = filter_valid(yb.data, h, w, g);
    const auto e_aa = filter_valid(aa, h, w, g);
    const auto e_bb = filter_valid(bb, h, w, g);
    const auto e_ab = filter_valid(ab, h, w, g);

    const double c1 = (kSsimK1 * 255.0) * (kSsimK1 * 255.0);
    const double c2 = (kSsimK2 * 255.0) * (kSsimK2 * 255.0);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
        const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

const MethodSummary& EvalReport::summary(const std::string& method) const {
    for (const auto& s : summaries)
        if (s.method == method) return s;
    throw ArgumentError("no summary for method " + method);
}

void summarize(EvalReport& report) {
    report.summaries.clear();
    for (const auto& row : report.rows) {
        auto it = std::find_if(report.summaries.begin(), report.summaries.end(),
                               [&](const MethodSummary& s) { return s.method == row.method; });
        if (it == report.summaries.end()) {
            report.summaries.push_back({row.method, 0.0, 0.0, 0});
        }
    }
    for (auto& s : report.summaries) {
        double psnr_sum = 0.0, ssim_sum = 0.0;
        std::size_t finite = 0;
        for (const auto& row : report.rows) {
            if (row.method != s.method) continue;
            ++s.images;
            ssim_sum += row.ssim;
            if (std::isfinite(row.psnr_db)) {
                psnr_sum += row.psnr_db;
                ++finite;
            }
        }
        // Identical pairs are excluded from the PSNR mean; all-identical
        // methods keep the infinite sentinel.
        s.mean_psnr_db = finite ? psnr_sum / static_cast<double>(finite) : kPsnrIdentical;
        s.mean_ssim = s.images ? ssim_sum / static_cast<double>(s.images) : 0.0;
    }
}

std::uint64_t evaluation_seed(std::uint64_t seed, const std::string& image_id) {
    return derive_seed(derive_seed(seed, "evaluate"), image_id);
}

EvalReport evaluate(const GeneratorParams& params, const PairedDataset& test_set, std::uint64_t seed,
                    bool include_truth) {
    if (test_set.empty()) throw ArgumentError("test set is empty");
    if (test_set.scale_factor != kTotalFactor) throw ArgumentError("evaluation expects a x4 dataset");
    EvalReport report;
    for (const auto& pair : test_set.pairs) {
        const ImageU8 srim = to_u8(sample(params, to_unit(pair.input), evaluation_seed(seed, pair.id)));
        const ImageU8 bicubic = bicubic_upscale(pair.input, kTotalFactor);
        report.rows.push_back({pair.id, kMethodSrim, psnr(srim, pair.target), ssim(srim, pair.target)});
        report.rows.push_back({pair.id, kMethodBicubic, psnr(bicubic, pair.target), ssim(bicubic, pair.target)});
        if (include_truth) {
            report.rows.push_back({pair.id, kMethodTruth, psnr(pair.target, pair.target), ssim(pair.target, pair.target)});
        }
    }
    summarize(report);
    return report;
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "image_id,method,psnr_db,ssim\n";
    for (const auto& r : report.rows) {
        out << r.image_id << ',' << r.method << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << '\n';
    }
    for (const auto& s : report.summaries) {
        out << "mean," << s.method << ',' << format_metric(s.mean_psnr_db) << ',' << format_metric(s.mean_ssim) << '\n';
    }
    return out.str();
}

}  // namespace srim
