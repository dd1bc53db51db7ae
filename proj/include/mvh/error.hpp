#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvh {

enum class ErrorCode {
    InvalidArgument,
    NonFinite,
    NoBracket,
    MaxIter,
    Unbounded,
    QuadratureFailure,
    OutOfRange,
    TimeAtExpiry,
    InsufficientCapital,
    SizeLimit,
    Config,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::NoBracket: return "NoBracket";
        case ErrorCode::MaxIter: return "MaxIter";
        case ErrorCode::Unbounded: return "Unbounded";
        case ErrorCode::QuadratureFailure: return "QuadratureFailure";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::TimeAtExpiry: return "TimeAtExpiry";
        case ErrorCode::InsufficientCapital: return "InsufficientCapital";
        case ErrorCode::SizeLimit: return "SizeLimit";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// failure mode was hit so the CLI can map it onto an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) throw Error(code, what);
}

}  // namespace mvh
