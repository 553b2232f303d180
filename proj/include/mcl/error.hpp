#pragma once

#include <stdexcept>
#include <string>

namespace mcl {

enum class ErrorKind {
    mode_index,
    shape,
    dims,
    argument,
    numeric,
    empty_dataset,
    format,
    bad_magic,
    bad_version,
    length_mismatch,
    crc_failure,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::mode_index: return "mode-index";
        case ErrorKind::shape: return "shape";
        case ErrorKind::dims: return "dims";
        case ErrorKind::argument: return "argument";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::empty_dataset: return "empty-dataset";
        case ErrorKind::format: return "format";
        case ErrorKind::bad_magic: return "bad-magic";
        case ErrorKind::bad_version: return "bad-version";
        case ErrorKind::length_mismatch: return "length-mismatch";
        case ErrorKind::crc_failure: return "crc-failure";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace mcl
