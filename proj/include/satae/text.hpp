#pragma once

#include <array>
#include <charconv>
#include <string>
#include <system_error>

namespace satae {

/// Shortest text that round-trips a double exactly.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) {
        return "nan";
    }
    return std::string(buf.data(), end);
}

}  // namespace satae
