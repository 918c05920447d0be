#pragma once

#include <stdexcept>
#include <string>

namespace infovgae {

// Error taxonomy used across the library. The CLI maps these onto exit
// codes: DataError -> 1, ConfigError -> 2, NumericError -> 3.

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace infovgae
