#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "srim/errors.hpp"
#include "srim/generator.hpp"
#include "srim/metrics.hpp"
#include "srim/resample.hpp"
#include "test_util.hpp"

using namespace srim;

namespace {

double luma_at(const ImageU8& img, int y, int x) {
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

double loop_psnr(const ImageU8& a, const ImageU8& b) {
    double se = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const double d = luma_at(a, y, x) - luma_at(b, y, x);
            se += d * d;
        }
    const double mse = se / (a.height * a.width);
    return 10 * std::log10(255.0 * 255.0 / mse);
}

// Window-by-window SSIM, no separable filtering.
double loop_ssim(const ImageU8& a, const ImageU8& b) {
    const int r = 5;
    double g[11][11], gs = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            g[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * 1.5 * 1.5));
            gs += g[i][j];
        }
    const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
    double total = 0;
    int count = 0;
    for (int y = r; y < a.height - r; ++y)
        for (int x = r; x < a.width - r; ++x) {
            double ma = 0, mb = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    ma += g[i][j] / gs * luma_at(a, y + i - r, x + j - r);
                    mb += g[i][j] / gs * luma_at(b, y + i - r, x + j - r);
                }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double da = luma_at(a, y + i - r, x + j - r) - ma;
                    const double db = luma_at(b, y + i - r, x + j - r) - mb;
                    va += g[i][j] / gs * da * da;
                    vb += g[i][j] / gs * db * db;
                    cov += g[i][j] / gs * da * db;
                }
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

}  // namespace

TEST(Luminance, KnownValues) {
    ImageU8 img(1, 3);
    img.at(0, 0, 0) = 255;
    for (int c = 0; c < 3; ++c) img.at(0, 1, c) = 255;
    for (int c = 0; c < 3; ++c) img.at(0, 2, c) = 90;
    const LumaImage y = luminance(img);
    EXPECT_NEAR(y.at(0, 0), 76.245, 1e-12);
    EXPECT_NEAR(y.at(0, 1), 255.0, 1e-12);
    EXPECT_NEAR(y.at(0, 2), 90.0, 1e-12);
}

TEST(Psnr, IdenticalIsInfinite) {
    std::mt19937_64 rng(1);
    const ImageU8 a = test::random_u8(12, 12, rng);
    EXPECT_EQ(psnr(a, a), kPsnrIdentical);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
}

TEST(Psnr, UnitMse) {
    const ImageU8 a(8, 8, 100), b(8, 8, 101);
    EXPECT_NEAR(psnr(a, b), 48.1308, 1e-4);
    EXPECT_NEAR(psnr(a, b), 20 * std::log10(255.0), 1e-9);
}

TEST(Psnr, MatchesLoopOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const ImageU8 a = test::random_u8(9 + t, 14, rng), b = test::random_u8(9 + t, 14, rng);
        EXPECT_NEAR(psnr(a, b), loop_psnr(a, b), 1e-6);
        EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
    }
    EXPECT_THROW(psnr(ImageU8(2, 2), ImageU8(2, 3)), ArgumentError);
}

TEST(Ssim, IdenticalIsExactlyOne) {
    std::mt19937_64 rng(3);
    const ImageU8 a = test::random_u8(20, 17, rng);
    EXPECT_EQ(ssim(a, a), 1.0);
    const ImageU8 flat(16, 16, 40);
    EXPECT_EQ(ssim(flat, flat), 1.0);
}

TEST(Ssim, MatchesLoopOracle) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 10; ++t) {
        const ImageU8 a = test::random_u8(11 + t, 15, rng), b = test::random_u8(11 + t, 15, rng);
        EXPECT_NEAR(ssim(a, b), loop_ssim(a, b), 1e-6);
    }
}

TEST(Ssim, ConstantPlusNoise) {
    std::mt19937_64 rng(5);
    const ImageU8 a(24, 24, 128);
    ImageU8 b = a;
    std::uniform_int_distribution<int> d(-3, 3);
    for (auto& v : b.data) v = static_cast<std::uint8_t>(128 + d(rng));
    const double s = ssim(a, b);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_NEAR(s, loop_ssim(a, b), 1e-6);
    EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
}

TEST(Ssim, BoundsAndErrors) {
    std::mt19937_64 rng(6);
    const ImageU8 a = test::random_u8(16, 16, rng);
    ImageU8 inv = a;
    for (auto& v : inv.data) v = static_cast<std::uint8_t>(255 - v);
    const double s = ssim(a, inv);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_LT(s, 0.0);
    EXPECT_THROW(ssim(ImageU8(10, 20), ImageU8(10, 20)), ArgumentError);
    EXPECT_THROW(ssim(ImageU8(12, 12), ImageU8(12, 13)), ArgumentError);
}

TEST(Evaluate, ReportLayout) {
    std::mt19937_64 rng(7);
    PairedDataset set;
    for (int i = 0; i < 3; ++i) {
        ImagePair p;
        p.id = "im" + std::to_string(i) + ".png";
        p.target = test::smooth_u8(16, 16, rng);
        p.input = downsample(p.target, 4);
        set.pairs.push_back(p);
    }
    SubNetworkConfig c;
    c.conv_layers = 2;
    c.kernel = 3;
    c.hidden_channels = 4;
    const GeneratorParams params = init_params(c, 1);
    const EvalReport r = evaluate(params, set, 9);
    EXPECT_EQ(r.rows.size(), 6u);
    EXPECT_EQ(r.summary(kMethodSrim).images, 3u);
    EXPECT_NEAR(r.summary(kMethodBicubic).mean_psnr_db,
                (psnr(bicubic_upscale(set.pairs[0].input, 4), set.pairs[0].target) +
                 psnr(bicubic_upscale(set.pairs[1].input, 4), set.pairs[1].target) +
                 psnr(bicubic_upscale(set.pairs[2].input, 4), set.pairs[2].target)) / 3,
                1e-9);
    // same seed → same SRIM numbers
    EXPECT_EQ(evaluate(params, set, 9).rows[0].psnr_db, r.rows[0].psnr_db);

    const EvalReport t = evaluate(params, set, 9, true);
    EXPECT_EQ(t.rows.size(), 9u);
    EXPECT_TRUE(std::isinf(t.summary(kMethodTruth).mean_psnr_db));
    EXPECT_EQ(t.summary(kMethodTruth).mean_ssim, 1.0);

    const std::string csv = report_csv(r);
    EXPECT_EQ(csv.rfind("image_id,method,psnr_db,ssim\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 + 2);
    EXPECT_NE(report_csv(t).find("inf"), std::string::npos);
}

TEST(Evaluate, MeansSkipInfiniteValues) {
    EvalReport r;
    r.rows = {{"a.png", "m", 30.0, 0.5}, {"b.png", "m", kPsnrIdentical, 1.0}, {"c.png", "m", 20.0, 0.7}};
    summarize(r);
    EXPECT_DOUBLE_EQ(r.summary("m").mean_psnr_db, 25.0);
    EXPECT_NEAR(r.summary("m").mean_ssim, 2.2 / 3, 1e-12);
    EXPECT_EQ(r.summary("m").images, 3u);
}
