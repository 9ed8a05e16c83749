#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace excel_surv {

enum class ErrorCode {
    MissingColumn,
    NonNumericCell,
    NonPositiveTime,
    BadEventValue,
    UnknownFeature,
    InvalidDataset,
    TooFewSubjects,
    InvalidArgument,
    NoEvents,
    ShapeMismatch,
    NonFiniteLoss,
    NoComparablePairs,
    ZeroCensorWeight,
    DegenerateGroups,
    ZeroMu,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::NonPositiveTime: return "NonPositiveTime";
    case ErrorCode::BadEventValue: return "BadEventValue";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::ZeroCensorWeight: return "ZeroCensorWeight";
    case ErrorCode::DegenerateGroups: return "DegenerateGroups";
    case ErrorCode::ZeroMu: return "ZeroMu";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

// Errors caused by the caller's data or arguments, as opposed to numerical
// failures inside the toolkit. The CLI maps these to exit code 2.
constexpr bool is_input_error(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::Io:
        return false;
    default:
        return true;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , code_(code)
    {
    }

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace excel_surv
