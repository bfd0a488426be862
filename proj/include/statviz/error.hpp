#pragma once

#include <stdexcept>
#include <string>

namespace statviz {

// Base for every error raised by the pipeline. The CLI maps subclasses of
// UsageError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller supplied something invalid (bad identifier, bad argument, bad file).
class UsageError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public UsageError {
public:
    using UsageError::UsageError;
};

class NotFoundError : public UsageError {
public:
    using UsageError::UsageError;
};

class ValidationError : public UsageError {
public:
    using UsageError::UsageError;
};

// Network or subprocess failure that may succeed on retry.
class TransportError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string fragment)
        : Error(what + ": " + fragment), fragment_(std::move(fragment)) {}

    const std::string& fragment() const noexcept { return fragment_; }

private:
    std::string fragment_;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace statviz
