#pragma once

// Little-endian primitives and the shared container preamble:
//
//   4 bytes  magic
//   u32      version
//   u64      JSON header length in bytes
//   ...      UTF-8 JSON header
//
// followed by a format-specific payload.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "encaudit/errors.hpp"

namespace encaudit::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
inline T byteswap_if_needed(T value) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return value;
    } else {
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        std::reverse(bytes.begin(), bytes.end());
        std::memcpy(&value, bytes.data(), sizeof(T));
        return value;
    }
}

template <typename T>
inline void write_le(std::ostream& out, T value) {
    value = byteswap_if_needed(value);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }

inline void write_f32s(std::ostream& out, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float v : values) write_le(out, v);
    }
}

template <typename T>
inline T read_le(std::istream& in, std::string_view what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw FormatError("unexpected end of file while reading " + std::string(what));
    return byteswap_if_needed(value);
}

inline std::uint32_t read_u32(std::istream& in, std::string_view what) {
    return read_le<std::uint32_t>(in, what);
}
inline std::uint64_t read_u64(std::istream& in, std::string_view what) {
    return read_le<std::uint64_t>(in, what);
}

inline void read_f32s(std::istream& in, std::span<float> values, std::string_view what) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(values.size_bytes()))
        throw FormatError("unexpected end of file while reading " + std::string(what));
    if constexpr (std::endian::native != std::endian::little) {
        for (float& v : values) v = byteswap_if_needed(v);
    }
}

inline void write_preamble(std::ostream& out, std::string_view magic, std::uint32_t version,
                           const nlohmann::json& header) {
    const std::string text = header.dump();
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    write_u32(out, version);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

// Largest JSON header accepted; guards against reading garbage lengths.
inline constexpr std::uint64_t kMaxHeaderBytes = 64ULL << 20;

inline nlohmann::json read_preamble(std::istream& in, std::string_view magic,
                                    std::uint32_t expected_version) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (in.gcount() != static_cast<std::streamsize>(got.size()) || got != magic)
        throw FormatError("bad magic, expected \"" + std::string(magic) + "\"");
    const auto version = read_u32(in, "version");
    if (version != expected_version)
        throw FormatError("unsupported version " + std::to_string(version));
    const auto length = read_u64(in, "header length");
    if (length > kMaxHeaderBytes) throw FormatError("header length " + std::to_string(length) + " too large");
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (in.gcount() != static_cast<std::streamsize>(length)) throw FormatError("truncated JSON header");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed JSON header: ") + e.what());
    }
}

}  // namespace encaudit::io
