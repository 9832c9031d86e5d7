#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kmf {

/// Broad failure class; the CLI maps these onto process exit codes.
enum class ErrorKind {
    config,     ///< invalid option or precondition on user input (exit 2)
    data,       ///< malformed or insufficient data (exit 3)
    numerical,  ///< divergence, ill-conditioning (exit 4)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Short machine-readable identifier, e.g. "dimension" or "insufficient_farfield".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::config, "config", msg}; }
inline Error dimension_error(const std::string& msg) { return {ErrorKind::data, "dimension", msg}; }
inline Error domain_error(const std::string& msg) { return {ErrorKind::data, "domain", msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::data, "io", msg}; }

class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::size_t epoch, const std::string& msg)
        : Error(ErrorKind::numerical, "training_diverged", msg), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class IllConditionedFit : public Error {
public:
    IllConditionedFit(double condition, const std::string& msg)
        : Error(ErrorKind::numerical, "ill_conditioned_fit", msg), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : Error(ErrorKind::data, "parse", msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace kmf
