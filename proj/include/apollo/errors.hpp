#pragma once

#include <stdexcept>
#include <string>

namespace apollo {

// Error categories map one-to-one onto CLI exit codes.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace apollo
