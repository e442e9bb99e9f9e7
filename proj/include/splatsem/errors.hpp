// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatsem {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct NonPositiveDepth : Error {
    using Error::Error;
};

// File-level failure; byte_offset points at the first offending byte.
struct ParseError : Error {
    std::size_t byte_offset;
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// A domain invariant does not hold; index is the first offending element
// when the violation is per-element, else -1.
struct InvariantViolation : Error {
    long index;
    explicit InvariantViolation(const std::string& msg, long idx = -1)
        : Error(idx >= 0 ? msg + " (primitive " + std::to_string(idx) + ")" : msg),
          index(idx) {}
};

struct NonPositiveTolerance : Error {
    using Error::Error;
};

struct EmptyPairSet : Error {
    using Error::Error;
};

struct NonPositiveVoxelSize : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct EmptyMask : Error {
    using Error::Error;
};

struct LengthMismatch : Error {
    using Error::Error;
};

struct NonFiniteComponent : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace splatsem
