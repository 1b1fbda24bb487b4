#pragma once

#include <stdexcept>
#include <string>

namespace frangi {

// Base class for every error the library reports.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Image or map dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Decoded data uses a layout or encoding the reader does not support.
class FormatError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

// An object was used in a state that cannot serve the request (e.g. an empty tape).
class StateError : public Error {
public:
    using Error::Error;
};

// Text input failed to parse; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace frangi
