#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace otgeo {

enum class ErrorKind {
    InvalidInput,
    InvalidConfig,
    Format,
    Numeric,
    Size,
    DegenerateRow,
    Shape,
    MissingArtifact,
    Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so that callers (the CLI,
/// the pipeline's per-instance error log) can react without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message)
{
    if (!condition) fail(kind, message);
}

}  // namespace otgeo
