#pragma once

#include <stdexcept>
#include <string>

namespace mld {

// Broad failure categories. The CLI maps these onto distinct exit codes.
enum class ErrorKind {
    shape,
    range,
    parse,
    file,
    config,
    conflict,
    divergence,
    unsupported_version,
    consistency,
    empty_input,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorKind::shape, w) {}
};

struct RangeError : Error {
    explicit RangeError(const std::string& w) : Error(ErrorKind::range, w) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& w) : Error(ErrorKind::parse, w) {}
};

struct FileError : Error {
    explicit FileError(const std::string& w) : Error(ErrorKind::file, w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};

/// Identical inputs carry different targets; upstream mode resolution was skipped.
struct ConflictError : Error {
    explicit ConflictError(const std::string& w) : Error(ErrorKind::conflict, w) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& w, std::size_t epoch)
        : Error(ErrorKind::divergence, w), epoch(epoch) {}
    std::size_t epoch;
};

struct VersionError : Error {
    explicit VersionError(const std::string& w) : Error(ErrorKind::unsupported_version, w) {}
};

struct ConsistencyError : Error {
    explicit ConsistencyError(const std::string& w) : Error(ErrorKind::consistency, w) {}
};

struct EmptyInputError : Error {
    explicit EmptyInputError(const std::string& w) : Error(ErrorKind::empty_input, w) {}
};

// IDX loader failures are distinct subtypes of ParseError.
struct IdxMagicError : ParseError {
    using ParseError::ParseError;
};
struct IdxTruncatedError : ParseError {
    using ParseError::ParseError;
};
struct IdxCountMismatchError : ParseError {
    using ParseError::ParseError;
};

} // namespace mld
