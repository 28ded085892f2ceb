#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace srim {

/// Named real arrays plus free-form JSON metadata, stored as
///
///   "SRIMTNSR" | u32 version | u64 header_bytes | JSON header | f64 blob
///
/// All integers and doubles are little-endian. The header lists each tensor
/// as {"name", "shape", "offset", "size"} with offset/size counted in doubles.
struct ArchiveTensor {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> values;
};

struct TensorArchive {
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json metadata = nlohmann::json::object();
    std::vector<ArchiveTensor> tensors;

    void add(std::string name, std::vector<std::int64_t> shape, std::span<const double> values);
    const ArchiveTensor* find(const std::string& name) const;
    // Throws FormatError when missing or when the size differs from expected.
    const ArchiveTensor& require(const std::string& name, std::size_t expected_size) const;
};

void write_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive read_archive(const std::filesystem::path& path);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace srim
