#pragma once

#include <stdexcept>
#include <string>

namespace driftcal {

// Training diverged (non-finite loss). Message names the offending step.
class TrainingFailure : public std::runtime_error {
public:
    explicit TrainingFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric has no defined value for the given inputs (e.g. rank correlation
// of a constant vector, AUC with a single class). Callers report the cell
// as missing instead of substituting a number.
class MetricUndefined : public std::runtime_error {
public:
    explicit MetricUndefined(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-facing configuration (CLI flags, run config files). Mapped to
// exit code 2 by the command-line tool.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace driftcal
