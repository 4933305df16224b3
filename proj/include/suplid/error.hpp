#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace suplid {

// Base for every error raised on bad input (files, flags, arguments).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed or unsupported file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

// Arguments that violate an operation's preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

// An internal invariant did not hold. Not derived from Error: the CLI maps
// this to a distinct exit code.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

using WarningHandler = std::function<void(const std::string&)>;

// Routes non-fatal diagnostics (clamped k, dropped records, ...). The default
// handler prints to stderr. Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace suplid
