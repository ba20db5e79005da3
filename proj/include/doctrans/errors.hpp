#pragma once

#include <stdexcept>
#include <string>

namespace doctrans {

// Bad user-supplied configuration (ranges, toggles, missing fields).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed file content.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged; carries the epoch where the loss went non-finite.
struct TrainingError : std::runtime_error {
    TrainingError(const std::string& msg, int epoch_index)
        : std::runtime_error(msg), epoch(epoch_index) {}
    int epoch;
};

// Broken caller contract (shape mismatches, length overflows).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

}  // namespace doctrans
