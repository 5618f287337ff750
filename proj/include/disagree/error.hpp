#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace disagree {

enum class Errc {
    EmptyAnnotations,
    SchemaMismatch,
    MalformedRow,
    InvalidSchema,
    InvalidDistribution,
    UnknownAnnotator,
    ConditioningMismatch,
    EmptySplit,
    InvalidConfig,
    InvalidSelection,
    EmptyVotes,
    TemplateError,
    Unparseable,
    DimensionMismatch,
    AlignmentError,
    DomainError,
    InvalidRequest,
    DuplicateResponse,
    UnknownItem,
    IoError,
    FormatError,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library. `code()` identifies the contract that
/// was violated; `what()` carries the human-readable context (file, row, id).
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), message_(message)
    {}

    Errc code() const noexcept { return code_; }
    /// what() without the error-code prefix.
    const std::string& message() const noexcept { return message_; }

private:
    Errc code_;
    std::string message_;
};

}  // namespace disagree
