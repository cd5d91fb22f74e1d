// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Flat binary tensor format:
//   "XVT1" | rank:u64 | dims:u64[rank] | payload:f64[prod(dims)]
// All integers and doubles little-endian, payload row-major.

#include "xvc/tensor.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace xvc {

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64(std::vector<unsigned char> &buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
}

inline std::uint64_t get_u64(const unsigned char *p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

} // namespace detail

inline constexpr std::array<char, 4> kTensorMagic = {'X', 'V', 'T', '1'};

inline std::vector<unsigned char> encode_tensor(const Tensor &t) {
    std::vector<unsigned char> buf(kTensorMagic.begin(), kTensorMagic.end());
    buf.reserve(4 + 8 * (1 + t.rank() + t.numel()));
    detail::put_u64(buf, t.rank());
    for (auto d : t.shape()) {
        detail::put_u64(buf, d);
    }
    for (double v : t.data()) {
        detail::put_u64(buf, std::bit_cast<std::uint64_t>(v));
    }
    return buf;
}

inline Tensor decode_tensor(std::span<const unsigned char> buf) {
    if (buf.size() < 12 || std::memcmp(buf.data(), kTensorMagic.data(), 4) != 0) {
        throw FormatError("tensor: bad magic");
    }
    const std::uint64_t rank = detail::get_u64(buf.data() + 4);
    if (rank > 32 || buf.size() < 12 + 8 * rank) {
        throw FormatError("tensor: truncated header");
    }
    Shape shape(rank);
    for (std::uint64_t i = 0; i < rank; ++i) {
        shape[i] = detail::get_u64(buf.data() + 12 + 8 * i);
        if (shape[i] == 0) {
            throw FormatError("tensor: zero dimension");
        }
    }
    const std::size_t n = numel(shape);
    const std::size_t offset = 12 + 8 * rank;
    if (buf.size() != offset + 8 * n) {
        throw FormatError("tensor: payload size " + std::to_string(buf.size() - offset) + " bytes, expected " +
                          std::to_string(8 * n));
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = std::bit_cast<double>(detail::get_u64(buf.data() + offset + 8 * i));
    }
    return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::filesystem::path &path, const Tensor &t) {
    const auto buf = encode_tensor(t);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("tensor: cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Tensor load_tensor(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("tensor: cannot open " + path.string());
    }
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(buf);
}

} // namespace xvc
