#pragma once

#include <stdexcept>
#include <string>

namespace kggen {

// Exit-code mapping used by the CLI: usage/config -> 1, data/grounding -> 2,
// numeric/dimension -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct GroundingError : Error {
    using Error::Error;
};

struct AlignmentError : Error {
    using Error::Error;
};

struct LookupError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return 3;
    return 2;
}

}  // namespace kggen
