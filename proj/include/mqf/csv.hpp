#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>

namespace mqf {

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Minimal CSV accumulator: header row first, UTF-8, LF line endings,
/// doubles in shortest round-trip form.
class CsvWriter {
public:
    template <typename... Cols>
    void header(const Cols&... cols) {
        row(cols...);
    }

    template <typename... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        (append_field(fields, first), ...);
        buffer_.push_back('\n');
    }

    const std::string& str() const { return buffer_; }

private:
    template <typename T>
    void append_field(const T& value, bool& first) {
        if (!first) buffer_.push_back(',');
        first = false;
        if constexpr (std::is_floating_point_v<T>) {
            buffer_ += format_double(static_cast<double>(value));
        } else if constexpr (std::is_integral_v<T>) {
            buffer_ += std::to_string(value);
        } else {
            buffer_ += std::string_view(value);
        }
    }

    std::string buffer_;
};

}  // namespace mqf
