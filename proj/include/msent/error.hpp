#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msent {

enum class ErrorKind {
    schema,
    duplicate,
    out_of_range,
    dimension_mismatch,
    empty_input,
    zero_variance,
    non_finite,
    unknown_id,
    invalid_argument,
    io,
    config,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::schema: return "schema";
        case ErrorKind::duplicate: return "duplicate";
        case ErrorKind::out_of_range: return "out_of_range";
        case ErrorKind::dimension_mismatch: return "dimension_mismatch";
        case ErrorKind::empty_input: return "empty_input";
        case ErrorKind::zero_variance: return "zero_variance";
        case ErrorKind::non_finite: return "non_finite";
        case ErrorKind::unknown_id: return "unknown_id";
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::io: return "io";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

/// Single exception type for the engine; `kind()` is what the CLI reports.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

}  // namespace msent
