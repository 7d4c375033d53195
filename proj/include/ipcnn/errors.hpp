#pragma once

#include <stdexcept>
#include <string>

namespace ipcnn {

// Every failure raised by the library derives from Error so the CLI can map
// categories onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or matrix shapes disagree with a layer spec.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A layer spec or physical parameter violates a precondition.
class InvalidSpecError : public Error {
public:
    using Error::Error;
};

// Negative intensity reached an optical modulator.
class EncodingError : public Error {
public:
    using Error::Error;
};

class InfeasibleDesignError : public Error {
public:
    using Error::Error;
};

// Simulated hardware returned a response that cannot be inverted.
class DegenerateHardwareError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ipcnn
