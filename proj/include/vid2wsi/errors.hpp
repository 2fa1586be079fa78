#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vid2wsi {

enum class ErrorKind {
    SingularTransform,
    ImageTooSmall,
    DimensionMismatch,
    NoFramesFound,
    InconsistentDimensions,
    InsufficientMatches,
    NoConsensus,
    EmptyInput,
    StitchFailed,
    NoValidTiles,
    IoError,
    CorruptPyramid,
    SpecInfeasible,
    ConfigError,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace vid2wsi
