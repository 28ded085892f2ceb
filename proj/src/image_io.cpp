#include "srim/image_io.hpp"

#include <algorithm>
#include <array>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "srim/errors.hpp"

namespace srim {
namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("error reading image: " + path.string());
    return bytes;
}

bool has_png_signature(const std::vector<unsigned char>& b) {
    static constexpr std::array<unsigned char, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return b.size() >= sig.size() && std::equal(sig.begin(), sig.end(), b.begin());
}

bool has_jpeg_signature(const std::vector<unsigned char>& b) {
    return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

ImageU8 decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw FormatError("invalid PNG " + name + ": " + image.message);
    }
    // Read with alpha so libpng does not composite; the alpha byte is then
    // discarded.
    image.format = PNG_FORMAT_RGBA;
    ImageU8 out(static_cast<int>(image.height), static_cast<int>(image.width));
    std::vector<unsigned char> rgba(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("invalid PNG " + name + ": " + msg);
    }
    for (std::size_t i = 0, n = out.size() / kChannels; i < n; ++i) {
        std::copy_n(&rgba[4 * i], kChannels, &out.data[kChannels * i]);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Warnings (such as premature end of data) are fatal: libjpeg would otherwise
// pad a truncated stream with gray pixels.
void jpeg_emit_message(j_common_ptr cinfo, int level) {
    if (level < 0) jpeg_error_exit(cinfo);
}

ImageU8 decode_jpeg(const std::vector<unsigned char>& bytes, const std::string& name) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_emit_message;
    ImageU8 out;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError("invalid JPEG " + name + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out = ImageU8(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width));
    const std::size_t stride = static_cast<std::size_t>(out.width) * kChannels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

}  // namespace

bool is_supported_image(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageU8 load_image(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (has_png_signature(bytes)) return decode_png(bytes, path.string());
    if (has_jpeg_signature(bytes)) return decode_jpeg(bytes, path.string());
    throw FormatError("unsupported image format: " + path.string());
}

void save_png(const ImageU8& img, const std::filesystem::path& path) {
    if (img.height <= 0 || img.width <= 0) throw ArgumentError("cannot save an empty image");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

}  // namespace srim
