#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heracles {

enum class Errc {
    ShapeMismatch,
    NonFinite,
    InvalidAxis,
    NotScalarLoss,
    DetachedTensor,
    NonFiniteEvaluation,
    EmptyInput,
    SingularMatrix,
    HeadDivisibility,
    IndivisibleSpatial,
    UnknownPreset,
    ConfigInvariantViolated,
    ParseError,
    TooFewRows,
    ConstantChannel,
    WindowTooLong,
    BadMagic,
    UnsupportedVersion,
    TruncatedFile,
    ChecksumMismatch,
    LabelOutOfRange,
    EmptySplit,
    ConfigMismatch,
    ToleranceExceeded,
    NoSpectralGates,
    BadInput,
    UnsupportedRank,
    Io,
};

std::string_view errc_name(Errc code) noexcept;

/// The single exception type thrown by the library. `code()` names the
/// failed contract; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// ParseError carrying the offending cell: 0-based data row (header excluded)
/// and 0-based column (the leading date column is column 0).
class ParseError : public Error {
public:
    ParseError(std::size_t row, std::size_t col, const std::string& detail)
        : Error(Errc::ParseError, "row " + std::to_string(row) + ", col " + std::to_string(col) + ": " + detail),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

}  // namespace heracles
