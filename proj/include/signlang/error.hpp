#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace signlang {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A landmark part or feature vector has the wrong number of entries.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed structured text. `where()` is a byte offset or a key path.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string where)
        : Error(what + " (at " + where + ")"), where_(std::move(where)) {}

    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// Tensor shapes that do not chain, or a cache that belongs to another model.
class ShapeError : public Error {
public:
    using Error::Error;
};

enum class LoadErrorKind {
    Io,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    ChecksumMismatch,
    DimensionMismatch,
    InvalidUtf8,
    Malformed,
};

const char* to_string(LoadErrorKind kind) noexcept;

/// Failure reading one of the binary artifacts (sequence, model, checkpoint).
class LoadError : public Error {
public:
    LoadError(LoadErrorKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    LoadErrorKind kind() const noexcept { return kind_; }

private:
    LoadErrorKind kind_;
};

/// Training produced a non-finite loss.
class DivergedError : public Error {
public:
    DivergedError(std::size_t epoch, std::size_t batch)
        : Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

} // namespace signlang
