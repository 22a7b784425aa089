#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "semdec/error.hpp"

// Raw little-endian blobs shared by feature packs and checkpoints.

namespace semdec::detail {

template <typename T>
T to_little_endian(T v) {
    static_assert(sizeof(T) == 4);
    if constexpr (std::endian::native == std::endian::big) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
        return std::bit_cast<T>(bits);
    }
    return v;
}

template <typename T>
void write_blob(const std::filesystem::path& path, std::span<const T> values, const std::string& field) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(field, "cannot open " + path.string() + " for writing");
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (T v : values) {
            const T le = to_little_endian(v);
            out.write(reinterpret_cast<const char*>(&le), sizeof(T));
        }
    }
    if (!out) throw FormatError(field, "write failed for " + path.string());
}

template <typename T>
std::vector<T> read_blob(const std::filesystem::path& path, std::size_t expected_count, const std::string& field) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw FormatError(field, "missing blob " + path.filename().string());
    if (bytes != expected_count * sizeof(T)) {
        throw FormatError(field, "blob holds " + std::to_string(bytes / sizeof(T)) + " entries (" +
                                     std::to_string(bytes) + " bytes), manifest expects " +
                                     std::to_string(expected_count));
    }
    std::vector<T> values(expected_count);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(field, "cannot open " + path.string());
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw FormatError(field, "short read on " + path.string());
    for (T& v : values) v = to_little_endian(v);
    return values;
}

}  // namespace semdec::detail
