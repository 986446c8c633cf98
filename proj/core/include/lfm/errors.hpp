#pragma once

#include <stdexcept>
#include <string>

namespace lfm {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad configuration or bad arguments: wrong flag combinations, malformed
// config files, templates referencing unknown placeholders, and so on.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Invalid data: schema violations, malformed CSV cells, records that fail
// validation, out-of-range scores, unaccepted rationales.
class DataError : public Error {
public:
    using Error::Error;
};

// Syntax error in a chain program.  Carries the 1-based source position.
class ChainParseError : public Error {
public:
    ChainParseError(const std::string& msg, int line, int col)
        : Error(msg + " (line " + std::to_string(line) + ", column " +
                std::to_string(col) + ")"),
          line_(line), col_(col) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return col_; }

private:
    int line_;
    int col_;
};

// Completion backend failure: timeouts, HTTP errors, malformed replies,
// prompts missing the record footer.
class BackendError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure (open/read/write).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lfm
