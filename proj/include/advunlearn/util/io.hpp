#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "advunlearn/errors.hpp"

namespace advunlearn::io {

template <typename UInt>
void write_le(std::ostream& out, UInt v) {
    static_assert(std::is_unsigned_v<UInt>);
    char buf[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    }
    out.write(buf, sizeof(UInt));
}

template <typename UInt>
UInt read_le(std::istream& in, const char* what) {
    static_assert(std::is_unsigned_v<UInt>);
    unsigned char buf[sizeof(UInt)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(UInt))) {
        throw ParseError(std::string("unexpected end of file while reading ") + what);
    }
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        v |= static_cast<UInt>(buf[i]) << (8 * i);
    }
    return v;
}

inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}
inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(read_le<std::uint32_t>(in, what));
}

/// Writes `contents` to `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace advunlearn::io
