#pragma once

#include <stdexcept>
#include <string>

namespace aes {

// Exit-code categories used by the CLI: 0 ok, 2 usage, 3 format, 4 data,
// 5 undefined statistic. Internal errors (broken invariants) map to 1.
enum class ErrorCategory {
    internal = 1,
    usage = 2,
    format = 3,
    data = 4,
    statistic = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

    const char* category_name() const noexcept {
        switch (category_) {
            case ErrorCategory::usage: return "usage";
            case ErrorCategory::format: return "format";
            case ErrorCategory::data: return "data";
            case ErrorCategory::statistic: return "statistic";
            case ErrorCategory::internal: break;
        }
        return "internal";
    }

private:
    ErrorCategory category_;
};

// Tensor shape disagreement (programming or config error).
struct ShapeError : Error {
    explicit ShapeError(const std::string& message) : Error(ErrorCategory::internal, message) {}
};

// Caller handed an argument outside the documented domain.
struct InputError : Error {
    explicit InputError(const std::string& message) : Error(ErrorCategory::data, message) {}
};

// An operation precondition was violated (e.g. fully masked attention row).
struct ContractError : Error {
    explicit ContractError(const std::string& message) : Error(ErrorCategory::internal, message) {}
};

// Malformed file.
struct FormatError : Error {
    explicit FormatError(const std::string& message) : Error(ErrorCategory::format, message) {}
};

// Well-formed file with invalid content.
struct DataError : Error {
    explicit DataError(const std::string& message) : Error(ErrorCategory::data, message) {}
};

// Requested statistic has no defined value on this input.
struct UndefinedStatisticError : Error {
    explicit UndefinedStatisticError(const std::string& message)
        : Error(ErrorCategory::statistic, message) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& message) : Error(ErrorCategory::usage, message) {}
};

}  // namespace aes
