#pragma once

#include <filesystem>

#include "srim/image.hpp"

namespace srim {

/// Reads a PNG or JPEG file as RGB. Grayscale is replicated to three channels
/// and any alpha channel is dropped. Throws IoError when the file cannot be
/// opened and FormatError when it cannot be decoded.
ImageU8 load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Byte-identical output for identical pixels.
void save_png(const ImageU8& img, const std::filesystem::path& path);

bool is_supported_image(const std::filesystem::path& path);

}  // namespace srim
