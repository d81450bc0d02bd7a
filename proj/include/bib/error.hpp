#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bib {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: manifests, tensors, configs, scheme files.
/// Carries the offending layer when one is known.
class DatasetError : public Error {
public:
    explicit DatasetError(const std::string& what, std::optional<int> layer_id = std::nullopt)
        : Error(layer_id ? "layer " + std::to_string(*layer_id) + ": " + what : what),
          layer_id_(layer_id) {}

    std::optional<int> layer_id() const noexcept { return layer_id_; }

private:
    std::optional<int> layer_id_;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf was found; flat_index is the first offending element.
class NonFiniteError : public DatasetError {
public:
    NonFiniteError(const std::string& what, int layer_id, std::size_t flat_index)
        : DatasetError(what, layer_id), flat_index_(flat_index) {}

    std::size_t flat_index() const noexcept { return flat_index_; }

private:
    std::size_t flat_index_;
};

class SchemaVersionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Coordinate descent hit max_iter. Keeps the last iterate so the caller can
/// inspect it or retry with a looser tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> last_alpha, double last_change,
                     double lambda)
        : Error(what), last_alpha_(std::move(last_alpha)), last_change_(last_change),
          lambda_(lambda) {}

    const std::vector<double>& last_alpha() const noexcept { return last_alpha_; }
    double last_change() const noexcept { return last_change_; }
    double lambda() const noexcept { return lambda_; }

private:
    std::vector<double> last_alpha_;
    double last_change_;
    double lambda_;
};

}  // namespace bib
