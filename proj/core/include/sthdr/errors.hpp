#pragma once

#include <stdexcept>
#include <string>

namespace sthdr {

// Every library failure derives from Error so callers can map categories to
// exit codes without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class MalformedSceneError : public DataError {
public:
    MalformedSceneError(const std::string& dir, const std::string& why)
        : DataError("malformed scene '" + dir + "': " + why), dir_(dir) {}
    const std::string& directory() const noexcept { return dir_; }

private:
    std::string dir_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

} // namespace sthdr
