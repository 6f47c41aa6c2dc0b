#pragma once

#include <stdexcept>
#include <string>

namespace cardiopulm {

// Error taxonomy mapped to CLI exit codes:
//   ValidationError -> 2, UpstreamMissingError -> 3, NumericError -> 4.
// Everything else (I/O, remote) also maps to 2 unless it names a missing
// upstream stage.

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class UpstreamMissingError : public std::runtime_error {
public:
    explicit UpstreamMissingError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class RemoteError : public std::runtime_error {
public:
    explicit RemoteError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cardiopulm
