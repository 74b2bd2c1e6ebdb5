#pragma once

#include <stdexcept>
#include <string>

namespace p2pm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the file and line so callers can point at it.
class ParseError : public Error {
public:
    ParseError(const std::string& source, int line, const std::string& message)
        : Error(source + ":" + std::to_string(line) + ": " + message), source_(source), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    int line() const noexcept { return line_; }

private:
    std::string source_;
    int line_;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// An operation was asked for something its inputs cannot supply
/// (e.g. a distance policy without a distance matrix).
class MissingDependencyError : public Error {
public:
    using Error::Error;
};

class UnreachableError : public Error {
public:
    using Error::Error;
};

class SingularSystemError : public Error {
public:
    using Error::Error;
};

/// Injections handed to the DC power flow do not balance.
class ImbalanceError : public Error {
public:
    ImbalanceError(double residual_mw, double tolerance_mw)
        : Error("injections do not balance: residual " + std::to_string(residual_mw) + " MW exceeds " +
                std::to_string(tolerance_mw) + " MW"),
          residual_(residual_mw) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// A requested target lies outside what a sweep can deliver.
class OutOfRangeError : public Error {
public:
    OutOfRangeError(const std::string& what, double low, double high)
        : Error(what + " (achievable interval [" + std::to_string(low) + ", " + std::to_string(high) + "])"),
          low_(low), high_(high) {}

    double low() const noexcept { return low_; }
    double high() const noexcept { return high_; }

private:
    double low_;
    double high_;
};

}  // namespace p2pm
