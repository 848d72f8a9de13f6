#pragma once

#include <stdexcept>
#include <string>

namespace gmeasure {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    using Error::Error;
};

struct ZeroPreActivation : Error {
    using Error::Error;
};

struct ZeroLogits : Error {
    using Error::Error;
};

struct NonPositiveBeta : Error {
    using Error::Error;
};

struct DegenerateGradient : Error {
    using Error::Error;
};

struct NonPositiveMargin : Error {
    using Error::Error;
};

struct DegenerateZoo : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ChecksumMismatch : IoError {
    using IoError::IoError;
};

struct VersionMismatch : IoError {
    using IoError::IoError;
};

struct UnknownLayerType : IoError {
    using IoError::IoError;
};

struct ValidationError : Error {
    using Error::Error;
};

}  // namespace gmeasure
