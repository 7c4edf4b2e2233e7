#pragma once

#include <stdexcept>
#include <string>

namespace bmdg {

// Base for everything this library throws on contract violations.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or unknown configuration value. Maps to exit code 2 in the CLI.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// An identity lacks images in one of the two modalities.
class CoverageError : public Error {
public:
    explicit CoverageError(int identity)
        : Error("identity " + std::to_string(identity) + " is missing a modality"),
          identity_(identity) {}
    int identity() const { return identity_; }

private:
    int identity_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// A mask column carries (almost) no weight, so its prototype is undefined.
class DegeneratePrototypeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace bmdg
