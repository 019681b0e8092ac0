#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace spr {

/// Base error for all toolkit failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad or missing configuration / IO problem (CLI exit code 1).
struct ConfigError : Error {
    using Error::Error;
};

/// Training loss became non-finite (CLI exit code 2).
struct DivergenceError : Error {
    using Error::Error;
};

/// A numeric computation produced NaN/Inf. The training loop converts this
/// into a DivergenceError; outside training it is an ordinary hard failure.
struct NumericError : Error {
    using Error::Error;
};

/// Pruning removed every entity (CLI exit code 3).
struct DegeneratePruningError : Error {
    using Error::Error;
};

/// Relaxation sandwich inequality violated beyond tolerance (CLI exit code 4).
struct OrderingError : Error {
    using Error::Error;
};

inline bool is_finite(double v) { return std::isfinite(v); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

}  // namespace spr
