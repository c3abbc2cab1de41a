#pragma once

#include <stdexcept>
#include <string>

namespace ua {

enum class ErrorCode {
    io,
    parse,
    invalid_argument,
    format,
    checksum_mismatch,
    fingerprint_mismatch,
    index_gap,
    layout_mismatch,
    unknown_sample,
    empty_class,
    empty_result,
    non_finite,
    infeasible,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace ua
