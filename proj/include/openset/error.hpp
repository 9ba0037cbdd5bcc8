#pragma once

#include <stdexcept>
#include <string>

namespace openset {

// Category of a failure; the CLI maps each one to a distinct exit status.
enum class ErrorCode {
    invalid_argument = 2,
    io = 3,
    dimension_mismatch = 4,
    invalid_data = 5,
    numeric = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace openset
