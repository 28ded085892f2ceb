#include <fstream>

#include <gtest/gtest.h>

#include "srim/errors.hpp"
#include "srim/image.hpp"
#include "srim/image_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace srim;

TEST(Image, QuantizeRoundsHalfUpAndClamps) {
    EXPECT_EQ(quantize(0.49), 0);
    EXPECT_EQ(quantize(0.5), 1);
    EXPECT_EQ(quantize(127.5), 128);
    EXPECT_EQ(quantize(-3.0), 0);
    EXPECT_EQ(quantize(300.0), 255);
}

TEST(Image, UnitRoundTrip) {
    std::mt19937_64 rng(1);
    const ImageU8 img = test::random_u8(5, 7, rng);
    const Image01 u = to_unit(img);
    for (double v : u.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(to_u8(u), img);
}

TEST(ImageIo, PngRoundTrip) {
    test::TempDir dir("io");
    std::mt19937_64 rng(2);
    const ImageU8 img = test::random_u8(256, 256, rng);
    save_png(img, dir / "a.png");
    const ImageU8 back = load_image(dir / "a.png");
    EXPECT_EQ(back.height, 256);
    EXPECT_EQ(back.width, 256);
    EXPECT_EQ(back, img);
}

TEST(ImageIo, WhitePixel) {
    test::TempDir dir("io");
    save_png(ImageU8(1, 1, 255), dir / "w.png");
    const ImageU8 back = load_image(dir / "w.png");
    ASSERT_EQ(back.size(), 3u);
    for (auto v : back.data) EXPECT_EQ(v, 255);
}

TEST(ImageIo, SavingTwiceGivesIdenticalBytes) {
    test::TempDir dir("io");
    std::mt19937_64 rng(3);
    const ImageU8 img = test::random_u8(9, 4, rng);
    save_png(img, dir / "a.png");
    save_png(img, dir / "b.png");
    std::ifstream a(dir / "a.png", std::ios::binary), b(dir / "b.png", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {});
    const std::string sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb);
}

TEST(ImageIo, GrayscaleIsReplicated) {
    const ImageU8 img = load_image(fs::path(SRIM_TEST_DATA) / "gray_2x3.png");
    ASSERT_EQ(img.height, 2);
    ASSERT_EQ(img.width, 3);
    const int expected[2][3] = {{0, 64, 128}, {192, 255, 10}};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x)
            for (int c = 0; c < 3; ++c) EXPECT_EQ(img.at(y, x, c), expected[y][x]);
}

TEST(ImageIo, AlphaIsDropped) {
    const ImageU8 img = load_image(fs::path(SRIM_TEST_DATA) / "rgba_2x2.png");
    ASSERT_EQ(img.height, 2);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            EXPECT_EQ(img.at(y, x, 0), 200);
            EXPECT_EQ(img.at(y, x, 1), 100);
            EXPECT_EQ(img.at(y, x, 2), 50);
        }
    }
}

TEST(ImageIo, JpegDecodes) {
    const ImageU8 img = load_image(fs::path(SRIM_TEST_DATA) / "smooth_16x24.jpg");
    ASSERT_EQ(img.height, 16);
    ASSERT_EQ(img.width, 24);
    // Lossy, so only roughly: R = 5(x+y), G = 255 - R, B = 77.
    for (int y = 0; y < 16; y += 5) {
        for (int x = 0; x < 24; x += 7) {
            EXPECT_NEAR(img.at(y, x, 0), 5 * (x + y), 10);
            EXPECT_NEAR(img.at(y, x, 1), 255 - 5 * (x + y), 10);
            EXPECT_NEAR(img.at(y, x, 2), 77, 10);
        }
    }
}

namespace {

void truncate_copy(const fs::path& src, const fs::path& dst, double keep) {
    std::ifstream in(src, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(static_cast<std::size_t>(bytes.size() * keep));
    std::ofstream(dst, std::ios::binary) << bytes;
}

}  // namespace

TEST(ImageIo, TruncatedPngIsFormatError) {
    test::TempDir dir("io");
    std::mt19937_64 rng(4);
    save_png(test::random_u8(32, 32, rng), dir / "full.png");
    truncate_copy(dir / "full.png", dir / "cut.png", 0.5);
    EXPECT_THROW(load_image(dir / "cut.png"), FormatError);
}

TEST(ImageIo, TruncatedJpegIsFormatError) {
    test::TempDir dir("io");
    truncate_copy(fs::path(SRIM_TEST_DATA) / "smooth_16x24.jpg", dir / "cut.jpg", 0.6);
    EXPECT_THROW(load_image(dir / "cut.jpg"), FormatError);
}

TEST(ImageIo, GarbageIsFormatError) {
    test::TempDir dir("io");
    std::ofstream(dir / "x.png") << "definitely not an image";
    EXPECT_THROW(load_image(dir / "x.png"), FormatError);
}

TEST(ImageIo, MissingFileIsIoError) {
    EXPECT_THROW(load_image("/nonexistent/srim/none.png"), IoError);
}

TEST(ImageIo, SupportedExtensions) {
    EXPECT_TRUE(is_supported_image("a.png"));
    EXPECT_TRUE(is_supported_image("a.JPG"));
    EXPECT_TRUE(is_supported_image("b.jpeg"));
    EXPECT_FALSE(is_supported_image("c.txt"));
    EXPECT_FALSE(is_supported_image("png"));
}
