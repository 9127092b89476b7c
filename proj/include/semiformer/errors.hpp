#pragma once

#include <stdexcept>
#include <string>

namespace semiformer {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration, detected before any step runs.
class ConfigError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    SplitError(const std::string& what, int offending_class)
        : Error(what), offending_class_(offending_class) {}

    int offending_class() const noexcept { return offending_class_; }

private:
    int offending_class_;
};

/// A caller broke a documented precondition (shape, normalization, emptiness).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite activation or loss. `where` names the layer or loss component.
class NumericalError : public Error {
public:
    NumericalError(const std::string& where, const std::string& what)
        : Error(where + ": " + what), where_(where) {}

    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

}  // namespace semiformer
