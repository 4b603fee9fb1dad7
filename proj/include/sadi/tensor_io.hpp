#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sadi/matrix.hpp"

namespace sadi {

// Tensor container: magic "SADI", then version, head count and token count as
// u32 little-endian, then rows * cols float32 little-endian payload, row-major
// by head.
inline constexpr std::uint32_t kTensorVersion = 1;

namespace detail {

inline void put_u32le(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff),
                           static_cast<char>((v >> 24) & 0xff)};
    os.write(bytes, 4);
}

inline std::uint32_t get_u32le(std::istream& is) {
    unsigned char bytes[4];
    is.read(reinterpret_cast<char*>(bytes), 4);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace detail

inline void write_tensor(const std::string& path, const matrix<float>& logits) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write("SADI", 4);
    detail::put_u32le(os, kTensorVersion);
    detail::put_u32le(os, static_cast<std::uint32_t>(logits.rows()));
    detail::put_u32le(os, static_cast<std::uint32_t>(logits.cols()));
    for (float v : logits.data()) {
        detail::put_u32le(os, std::bit_cast<std::uint32_t>(v));
    }
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline matrix<float> read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SADI") {
        throw std::runtime_error(path + ": bad magic, not a SADI tensor file");
    }
    const std::uint32_t version = detail::get_u32le(is);
    const std::uint32_t heads = detail::get_u32le(is);
    const std::uint32_t tokens = detail::get_u32le(is);
    if (!is) throw std::runtime_error(path + ": truncated header");
    if (version != kTensorVersion) {
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    }
    if (heads < 1 || tokens < 1) {
        throw std::runtime_error(path + ": invalid dimensions " + std::to_string(heads) + "x" +
                                 std::to_string(tokens));
    }
    const std::uint64_t count = static_cast<std::uint64_t>(heads) * tokens;
    if (count > (1ull << 28)) {
        throw std::runtime_error(path + ": tensor too large (" + std::to_string(count) +
                                 " values)");
    }
    matrix<float> logits(static_cast<int>(heads), static_cast<int>(tokens));
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = detail::get_u32le(is);
        if (!is) throw std::runtime_error(path + ": truncated payload");
        logits.data()[i] = std::bit_cast<float>(bits);
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error(path + ": trailing data after payload");
    }
    return logits;
}

}  // namespace sadi
