#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <type_traits>

#include "glyphlm/tensor.hpp"

namespace glyphlm {

/// Tensor blob: u32 rank, u32 dims[rank], u8 dtype tag (0 = f32, 1 = f64),
/// then raw values. Everything little-endian; round-trips bit-exactly.
namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("tensor blob truncated");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, std::uint32_t(v & 0xFFFFFFFFu));
    put_u32(out, std::uint32_t(v >> 32));
}

inline std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

template <typename T>
constexpr std::uint8_t dtype_tag() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
    detail::put_u32(out, std::uint32_t(t.shape.size()));
    for (int d : t.shape) detail::put_u32(out, std::uint32_t(d));
    const std::uint8_t tag = detail::dtype_tag<T>();
    out.write(reinterpret_cast<const char*>(&tag), 1);
    // this project only targets little-endian hosts; raw write is the format
    out.write(reinterpret_cast<const char*>(t.value.data()), std::streamsize(t.value.size() * sizeof(T)));
    if (!out) throw IoError("failed writing tensor blob");
}

template <typename T>
TensorPtr<T> read_tensor(std::istream& in) {
    const std::uint32_t rank = detail::get_u32(in);
    if (rank > 8) throw IoError("tensor blob: implausible rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = int(detail::get_u32(in));
    std::uint8_t tag;
    if (!in.read(reinterpret_cast<char*>(&tag), 1)) throw IoError("tensor blob truncated");
    if (tag != detail::dtype_tag<T>()) throw IoError("tensor blob dtype mismatch");
    auto t = make_tensor<T>(shape);
    if (!in.read(reinterpret_cast<char*>(t->value.data()), std::streamsize(t->value.size() * sizeof(T))))
        throw IoError("tensor blob truncated");
    return t;
}

}  // namespace glyphlm
