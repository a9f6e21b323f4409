#pragma once

#include <stdexcept>
#include <string>

namespace scit {

// Base for all library errors so the CLI can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct SerializeError : Error {
    using Error::Error;
};

struct SequenceTooLongError : Error {
    using Error::Error;
};

struct EmptyTargetError : Error {
    using Error::Error;
};

struct TrainingDivergedError : Error {
    using Error::Error;
};

struct HashMismatchError : Error {
    using Error::Error;
};

struct UnknownTargetError : Error {
    using Error::Error;
};

struct UnregisteredTaskError : Error {
    using Error::Error;
};

struct MissingClassError : Error {
    using Error::Error;
};

struct EmptyInstructionError : Error {
    using Error::Error;
};

struct UndefinedUpperBoundError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace scit
