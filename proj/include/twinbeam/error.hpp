#pragma once

#include <stdexcept>
#include <string>

namespace twinbeam {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition supplied by the caller (CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed file content; the message carries the byte offset or line number.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Statistical or runtime failure during analysis (CLI exit code 2).
class AnalysisError : public Error {
public:
    using Error::Error;
};

}  // namespace twinbeam
