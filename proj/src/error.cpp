#include "otgeo/error.hpp"

namespace otgeo {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Format: return "format";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Size: return "size";
    case ErrorKind::DegenerateRow: return "degenerate-row";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::MissingArtifact: return "missing-artifact";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind)
{
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace otgeo
