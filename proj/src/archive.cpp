#include "srim/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "srim/errors.hpp"

namespace srim {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'R', 'I', 'M', 'T', 'N', 'S', 'R'};

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& name) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("truncated archive: " + name);
    return value;
}

}  // namespace

void TensorArchive::add(std::string name, std::vector<std::int64_t> shape, std::span<const double> values) {
    std::int64_t count = 1;
    for (auto d : shape) count *= d;
    if (count < 0 || static_cast<std::size_t>(count) != values.size()) {
        throw ArgumentError("tensor " + name + " has " + std::to_string(values.size()) + " values but its shape holds " +
                            std::to_string(count));
    }
    tensors.push_back({std::move(name), std::move(shape), std::vector<double>(values.begin(), values.end())});
}

const ArchiveTensor* TensorArchive::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const ArchiveTensor& TensorArchive::require(const std::string& name, std::size_t expected_size) const {
    const ArchiveTensor* t = find(name);
    if (!t) throw FormatError("archive is missing tensor '" + name + "'");
    if (t->values.size() != expected_size) {
        throw FormatError("tensor '" + name + "' has " + std::to_string(t->values.size()) + " values, expected " +
                          std::to_string(expected_size));
    }
    return *t;
}

void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
    nlohmann::json header;
    header["metadata"] = archive.metadata;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : archive.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"size", t.values.size()}});
        offset += t.values.size();
    }
    const std::string text = header.dump();

    // Write to a sibling file first so an interrupted save never leaves a
    // half-written archive under the final name.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(kMagic, sizeof(kMagic));
        write_pod<std::uint32_t>(out, TensorArchive::kVersion);
        write_pod<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : archive.tensors) {
            out.write(reinterpret_cast<const char*>(t.values.data()),
                      static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        }
        if (!out) throw IoError("error writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string name = path.string();
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a tensor archive: " + name);
    }
    const auto version = read_pod<std::uint32_t>(in, name);
    if (version != TensorArchive::kVersion) {
        throw FormatError("unsupported archive version " + std::to_string(version) + " in " + name);
    }
    const auto header_size = read_pod<std::uint64_t>(in, name);
    if (header_size > (std::uint64_t{1} << 32)) throw FormatError("implausible archive header size in " + name);
    std::string text(header_size, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_size))) throw FormatError("truncated archive: " + name);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt archive header in " + name + ": " + e.what());
    }
    TensorArchive archive;
    archive.metadata = header.value("metadata", nlohmann::json::object());
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("tensors")) {
        ArchiveTensor t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto size = entry.at("size").get<std::uint64_t>();
        if (offset != expected_offset) throw FormatError("non-contiguous tensor '" + t.name + "' in " + name);
        t.values.resize(size);
        if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(size * sizeof(double)))) {
            throw FormatError("truncated tensor data for '" + t.name + "' in " + name);
        }
        expected_offset += size;
        archive.tensors.push_back(std::move(t));
    }
    return archive;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr)) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream hex;
    for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return hex.str();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

}  // namespace srim
