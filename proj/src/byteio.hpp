#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "suplid/error.hpp"

namespace suplid::io::detail {

template <typename UInt>
void put_le(std::ostream& out, UInt value) {
    std::array<char, sizeof(UInt)> buf{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    out.write(buf.data(), buf.size());
}

inline void put_f32(std::ostream& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }

// `context` prefixes the truncation message, e.g. "SLTF: truncated header".
template <typename UInt>
UInt get_le(std::istream& in, std::string_view context, std::string_view field) {
    std::array<unsigned char, sizeof(UInt)> buf{};
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw FormatError(std::string(context) + " while reading " + std::string(field));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(UInt{buf[i]} << (8 * i));
    return v;
}

inline float get_f32(std::istream& in, std::string_view context, std::string_view field) {
    return std::bit_cast<float>(get_le<std::uint32_t>(in, context, field));
}

}  // namespace suplid::io::detail
