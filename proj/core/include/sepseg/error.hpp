#pragma once

#include <stdexcept>
#include <string>

namespace sepseg {

// Error taxonomy mirrored by the CLI exit codes (2/3/4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad flags, inconsistent specs, out-of-range options.
struct ConfigError : Error {
    using Error::Error;
};

// Bad or missing data: files, headers, shape/geometry mismatches.
struct DataError : Error {
    using Error::Error;
};

// Numerical failure at runtime (non-finite loss, undefined metric, ...).
struct NumericError : Error {
    using Error::Error;
};

}  // namespace sepseg
