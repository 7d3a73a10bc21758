#pragma once

#include <stdexcept>
#include <string>

namespace coopercept {

// Base class for every failure this library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad parameter, wrong channel
// count, inverted thresholds, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Hough voting found no circle (empty edge map, blank frame).
class NoCircleFound : public Error {
public:
    using Error::Error;
};

// Left/right pupil samples are further apart in time than the device period.
class TimestampGap : public Error {
public:
    using Error::Error;
};

// Pyramid levels or matrix dimensions do not line up.
class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// Innovation covariance is numerically singular; the update cannot proceed.
class SingularInnovation : public Error {
public:
    using Error::Error;
};

// Two time series share no usable common range or timestamps.
class EmptyOverlap : public Error {
public:
    using Error::Error;
};

// A required input directory or file produced nothing to work on.
class EmptyInput : public Error {
public:
    using Error::Error;
};

// File-format violation; carries the offending path and 1-based line.
class ParseError : public Error {
public:
    ParseError(const std::string& path, long line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what),
          path_(path),
          line_(line) {}
    const std::string& path() const { return path_; }
    long line() const { return line_; }

private:
    std::string path_;
    long line_;
};

// Config file is missing a key or holds a value outside its constraint.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem / codec failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace coopercept
