#pragma once

// Little/big-endian byte packing shared by the model, dataset and image formats.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "satae/errors.hpp"

namespace satae::io {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

class ByteWriter {
public:
    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void put_u8(std::uint8_t v) { buf_.push_back(v); }

    void put_u32_le(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void put_u32_be(std::uint32_t v) {
        for (int i = 3; i >= 0; --i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void put_f64_le(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }
    }

    template <class Range>
    void put_f64_array(const Range& values) {
        for (double v : values) {
            put_f64_le(v);
        }
    }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Bounds-checked cursor; every short read raises TruncatedFile.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

    std::span<const std::uint8_t> take(std::size_t n) {
        if (remaining() < n) {
            throw TruncatedFile(what_ + ": expected " + std::to_string(n) + " more bytes at offset " +
                                std::to_string(pos_) + ", found " + std::to_string(remaining()));
        }
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint8_t u8() { return take(1)[0]; }

    std::uint32_t u32_le() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }

    std::uint32_t u32_be() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }

    double f64_le() {
        auto b = take(8);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) {
            bits = (bits << 8) | b[static_cast<std::size_t>(i)];
        }
        return std::bit_cast<double>(bits);
    }

    template <class MutableRange>
    void f64_array(MutableRange& out) {
        for (auto& v : out) {
            v = f64_le();
        }
    }

    // Checks a fixed-length ASCII tag such as "SATAE001".
    void expect_magic(std::string_view magic) {
        if (remaining() < magic.size()) {
            throw TruncatedFile(what_ + ": file shorter than its magic");
        }
        auto b = take(magic.size());
        if (!std::equal(magic.begin(), magic.end(), b.begin(),
                        [](char c, std::uint8_t u) { return static_cast<std::uint8_t>(c) == u; })) {
            throw BadMagic(what_ + ": bad magic, expected " + std::string(magic));
        }
    }

private:
    std::span<const std::uint8_t> data_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace satae::io
