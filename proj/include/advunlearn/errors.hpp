#pragma once

#include <stdexcept>
#include <string>

namespace advunlearn {

/// Invalid configuration: bad hyperparameters, mismatched shapes between
/// components, unknown config keys.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or vector length does not match what an operation expects.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A loss, gradient or input became NaN/Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed dataset, checkpoint or config file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluation on an empty subset or an incomplete report.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace advunlearn
