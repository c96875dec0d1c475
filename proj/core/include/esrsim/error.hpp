#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace esrsim {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates a documented precondition or invariant.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Evaluation point lies outside the region where a model is valid.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Linear algebra or iteration failed to produce a finite answer.
class NumericError : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

/// More than one solution (or a non-monotonic bracket) where one was expected.
class Ambiguity : public Error {
public:
    Ambiguity(const std::string& what, std::vector<double> candidates)
        : Error(what), candidates_(std::move(candidates)) {}
    const std::vector<double>& candidates() const noexcept { return candidates_; }

private:
    std::vector<double> candidates_;
};

/// The ODE integrator could not continue; carries the time of failure.
class SolverFailure : public Error {
public:
    SolverFailure(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class FitFailure : public Error {
public:
    FitFailure(const std::string& what, std::vector<double> residuals)
        : Error(what), residuals_(std::move(residuals)) {}
    const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
    std::vector<double> residuals_;
};

}  // namespace esrsim
