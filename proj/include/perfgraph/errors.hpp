#pragma once

#include <stdexcept>
#include <string>

namespace perfgraph {

/// Malformed or inconsistent input data (CSV schema violations, referential
/// integrity failures, out-of-range values). CLI exit code 1.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration or API misuse (bad manifest keys, missing reverse
/// relations, invalid hyperparameters). CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/graph dimension mismatch. Treated as a configuration error by the CLI.
struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

/// Training diverged or could not complete. CLI exit code 3.
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace perfgraph
